"""Operator command line.

Subcommands: init, insert, get, analyze, simulate, faults. Exit codes are
a stable contract: 0 success, 1 key not found, 2 usage or domain error,
3 store error. All commands are non-interactive; the only stdin use is
``--pass-stdin``.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from pathlib import Path

from .analysis import expected_unique_files, solve_segment_width
from .config import SystemConfig, alphabet_for
from .encoding import Credential, insert_key, retrieve_key
from .errors import (
    BflutError,
    ConfigError,
    DegenerateWildcard,
    InvalidCredential,
    InvalidParams,
    InvalidPrefix,
    InvalidSegmentation,
    OracleInfeasible,
    StoreError,
)
from .store import FaultPlan, PartitionStore, StoreLock, load_fault_plan
from . import report
from .simulate import parse_experiment_config, run_erasure_sweep, run_population

_USAGE_ERRORS = (
    InvalidPrefix,
    InvalidCredential,
    InvalidParams,
    InvalidSegmentation,
    ConfigError,
    OracleInfeasible,
)

EXIT_OK = 0
EXIT_NOT_FOUND = 1
EXIT_USAGE = 2
EXIT_STORE = 3


def _default_store_path() -> str:
    return os.environ.get("BFLUT_STORE", "bflut-store")


def _add_store_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--path",
        default=None,
        help="store directory (default: $BFLUT_STORE or ./bflut-store)",
    )


def _store_path(args: argparse.Namespace) -> Path:
    return Path(args.path if args.path is not None else _default_store_path())


def _add_credential_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--user", required=True, help="username")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--pass", dest="password", help="password (test ergonomics only)")
    group.add_argument(
        "--pass-stdin",
        action="store_true",
        help="read the password from the first line of stdin",
    )


def _credential(args: argparse.Namespace) -> Credential:
    password = args.password
    if args.pass_stdin:
        password = sys.stdin.readline().rstrip("\n")
    return Credential(args.user, password)


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


# -- subcommands ----------------------------------------------------------------


def cmd_init(args: argparse.Namespace) -> int:
    path = _store_path(args)
    if (path / "registry.txt").exists() and not args.force:
        raise StoreError(f"store already exists at {path} (use --force to overwrite)")
    store = PartitionStore.create(args.files, args.bits_per_file, args.seed)
    with StoreLock(path):
        store.save(path)
    entries = store.registry_snapshot().entries
    print(f"initialized {store.file_count} files of {store.bits_per_file} bits at {path}")
    print(f"total bits: {store.total_bits}")
    print(f"registry: {len(entries)} addresses, lowest {entries[0][0]:064x}")
    return EXIT_OK


def _system_config(store: PartitionStore, args: argparse.Namespace, key_len: int) -> SystemConfig:
    return SystemConfig(
        file_count=store.file_count,
        bits_per_file=store.bits_per_file,
        key_len=key_len,
        segment_width=args.segment_width,
        radix=args.radix,
    )


def cmd_insert(args: argparse.Namespace) -> int:
    path = _store_path(args)
    cred = _credential(args)
    with StoreLock(path):
        store = PartitionStore.load(path)
        if args.key is not None:
            key = args.key
        else:
            alphabet = alphabet_for(args.radix)
            rng = random.Random() if args.key_seed is None else random.Random(args.key_seed)
            key = "".join(rng.choice(alphabet) for _ in range(args.key_len))
            print(f"key: {key}")
        cfg = _system_config(store, args, len(key))
        receipt = insert_key(cred, key, store, cfg, actor=args.actor)
        store.save(path)
    print(f"{receipt.new_bits} new bits")
    print(f"files touched: {receipt.files_touched}")
    return EXIT_OK


def cmd_get(args: argparse.Namespace) -> int:
    path = _store_path(args)
    cred = _credential(args)
    store = PartitionStore.load(path)
    cfg = _system_config(store, args, args.key_len)
    result = retrieve_key(cred, store, cfg, wildcard_on_missing=args.wildcard)
    for candidate in sorted(result.candidates):
        print(candidate)
    print(f"files touched: {result.files_touched}")
    if not result.candidates:
        return EXIT_NOT_FOUND
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.formula == "fp":
        ns = _ints(args.n)
        rows = report.fp_sweep(ns, args.l, args.u, args.f_bits)
        for row in rows:
            print(f"{row.probability:.2e}  (log10 {row.log10_probability:.4f})")
        if args.csv:
            report.write_fp_table(rows, args.csv)
        if (args.csv or args.plot) and not args.no_plot:
            report.render_fp_figure(rows, _plot_path(args))
    elif args.formula == "min-f":
        targets = _floats(args.pfp)
        rows = report.min_storage_sweep(targets, args.n_keys, args.l, args.u)
        for row in rows:
            print(
                f"p_fp={row.target_fp:.0e}: {row.result.bits:.0f} bits "
                f"= {row.result.file_units:.2f} * 2^21"
            )
        if args.csv:
            report.write_min_storage_table(rows, args.csv)
        if (args.csv or args.plot) and not args.no_plot:
            report.render_min_storage_figure(rows, _plot_path(args))
    elif args.formula == "solve-u":
        solution = solve_segment_width(args.n_keys, args.l, args.f_bits, args.alpha)
        print(f"segment width: {solution.exact_width:.6f}")
        print(
            f"nearest divisor of {args.l}: {solution.divisor_width} "
            f"(achieved ratio {solution.achieved_ratio:.6f})"
        )
        if solution.underloaded:
            print("warning: solution below 1, system is underloaded", file=sys.stderr)
    elif args.formula == "efiles":
        value = expected_unique_files(args.k, args.ops)
        print(f"{value:.10g}")
    return EXIT_OK


def _plot_path(args: argparse.Namespace) -> Path:
    if args.plot:
        return Path(args.plot)
    return Path(args.csv).with_suffix(".png")


def cmd_simulate(args: argparse.Namespace) -> int:
    config, fractions = parse_experiment_config(args.config)
    out_dir = Path(args.out_dir)
    sim = run_population(config)
    report.write_population_csv(sim, out_dir / "table2.csv")
    if not args.no_plots:
        report.render_population_figure(sim, out_dir / "table2.png")
    print(f"population: {config.population} keys over {config.file_count} files")
    for user in sorted(sim.users, key=lambda u: u.username):
        print(f"  {user.username}: {user.unique_files} unique files, "
              f"{user.total_lookups} lookups, {user.candidate_count} candidates")
    print(f"activated ratio: {sim.activated_ratio:.6f} ({sim.popcount} bits)")
    measured_mean = sum(u.unique_files for u in sim.users) / max(len(sim.users), 1)
    print(
        f"unique files: measured mean {measured_mean:.2f}, "
        f"uniform-routing prediction {sim.uniform_unique_prediction:.4f}"
    )
    if sim.fp_probes:
        print(
            f"false positives: {sim.fp_events}/{sim.fp_probes} "
            f"(rate {sim.fp_rate:.6f}, closed form {sim.closed_form_fp:.6e})"
        )
    if fractions is not None:
        points = run_erasure_sweep(config, fractions)
        report.write_erasure_csv(points, out_dir / "erasure.csv")
        if not args.no_plots:
            report.render_erasure_figure(points, out_dir / "erasure.png")
        for point in points:
            state = "degenerate" if point.degenerate else f"recall {point.recall:.3f}"
            print(
                f"erasure {point.fraction:.2f} ({point.erased_files} files): {state}, "
                f"inflation {point.inflation:.3f}"
            )
    print(f"reports written to {out_dir}")
    return EXIT_OK


def cmd_faults(args: argparse.Namespace) -> int:
    path = _store_path(args)
    with StoreLock(path):
        store = PartitionStore.load(path)
        if args.clear:
            store.clear_faults()
        else:
            plan = store.fault_plan
            erased = set(plan.erased)
            unavailable = set(plan.unavailable)
            if args.plan:
                loaded = load_fault_plan(args.plan)
                erased |= loaded.erased
                unavailable |= loaded.unavailable
            if args.erase:
                erased |= set(_ints(args.erase))
            if args.unavailable:
                unavailable |= set(_ints(args.unavailable))
            store.apply_faults(FaultPlan(frozenset(erased), frozenset(unavailable)))
        store.save(path)
        plan = store.fault_plan
    print(f"erased: {sorted(plan.erased) or '-'}")
    print(f"unavailable: {sorted(plan.unavailable) or '-'}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bflut",
        description="Prefix-activated Bloom filter key store and its analyses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create an on-disk store")
    p.add_argument("--files", type=int, required=True)
    p.add_argument("--bits-per-file", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="overwrite an existing store")
    _add_store_arg(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("insert", help="store a key under a credential")
    _add_credential_args(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--key", help="key to store (radix digits)")
    group.add_argument("--random", action="store_true", help="generate a random key")
    p.add_argument("--key-len", type=int, default=64, help="random key length")
    p.add_argument("--key-seed", type=int, default=None, help="seed for --random")
    p.add_argument("--radix", type=int, default=16, choices=(2, 16))
    p.add_argument("--segment-width", type=int, default=4)
    p.add_argument("--actor", default="cli", help="identity charged against write quotas")
    _add_store_arg(p)
    p.set_defaults(func=cmd_insert)

    p = sub.add_parser("get", help="retrieve candidate keys for a credential")
    _add_credential_args(p)
    p.add_argument("--key-len", type=int, required=True)
    p.add_argument("--radix", type=int, default=16, choices=(2, 16))
    p.add_argument("--segment-width", type=int, default=4)
    p.add_argument(
        "--wildcard",
        action="store_true",
        help="treat erased/unavailable partitions as matching",
    )
    _add_store_arg(p)
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("analyze", help="closed-form calculations")
    p.add_argument(
        "--formula", required=True, choices=("fp", "solve-u", "min-f", "efiles")
    )
    p.add_argument("--n", help="stored key count(s), comma separated for sweeps")
    p.add_argument("--l", type=int, default=64, help="key length")
    p.add_argument("--u", type=int, default=4, help="segment width")
    p.add_argument("--f-bits", type=int, help="total bits in the system")
    p.add_argument("--alpha", type=float, help="target activated-bit ratio")
    p.add_argument("--pfp", help="target false-positive probability (comma separated)")
    p.add_argument("--k", type=int, help="file count")
    p.add_argument("--ops", type=int, help="file accesses per retrieval")
    p.add_argument("--csv", help="write the results as CSV")
    p.add_argument("--plot", help="figure path (defaults next to --csv)")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run a seeded experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="reports")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("faults", help="apply or clear a fault plan on a store")
    p.add_argument("--erase", help="comma-separated file ids to erase")
    p.add_argument("--unavailable", help="comma-separated file ids to mark unreachable")
    p.add_argument("--plan", help="fault plan file")
    p.add_argument("--clear", action="store_true")
    _add_store_arg(p)
    p.set_defaults(func=cmd_faults)

    return parser


def _validate_analyze(args: argparse.Namespace) -> None:
    needed = {
        "fp": ("n", "f_bits"),
        "solve-u": ("n", "f_bits", "alpha"),
        "min-f": ("n", "pfp"),
        "efiles": ("k", "ops"),
    }[args.formula]
    for name in needed:
        if getattr(args, name) is None:
            raise ConfigError(
                f"--formula {args.formula} requires --{name.replace('_', '-')}"
            )
    if args.formula in ("solve-u", "min-f"):
        counts = _ints(args.n)
        if len(counts) != 1:
            raise ConfigError(f"--formula {args.formula} takes a single --n")
        args.n_keys = counts[0]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.func is cmd_analyze:
            _validate_analyze(args)
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateWildcard as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except BflutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
