"""Deterministic experiment driver.

Builds a store from an `ExperimentConfig`, inserts a seeded key population,
re-retrieves every key (aborting on any false negative), probes fresh
credentials for false positives, and measures unique-file-access counts,
activated-bit ratio and erasure resilience. Every run is a pure function
of its config, seed included, so reports and the CSV files rendered from
them are byte-identical across repeats.

Two measured false-positive rates are reported:

* ``fp_rate`` counts a probe as positive when the probe's own key finds
  all of its bits already lit. This is the event the closed form scores,
  so it is the number to compare against `analysis.fp_probability`.
* ``fp_any_candidate_rate`` (optional, needs ``probe_full_search``) counts
  a probe as positive when a full retrieval for the probe credential
  returns any candidate at all. Shared prefixes make key survival
  correlated, so this rate sits well above the closed form; it is reported
  for completeness, not for calibration.
"""

from __future__ import annotations

import itertools
import math
import random
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

from .analysis import expected_unique_files, fp_probability_from_bits
from .config import HASH_HEX_LEN, SystemConfig, alphabet_for
from .encoding import (
    Credential,
    check_key,
    derive_prefix_address,
    insert_key,
    lookup_trace,
    retrieve_key,
    segment_positions,
)
from .errors import (
    ConfigError,
    DegenerateWildcard,
    FalseNegativeError,
    OracleInfeasible,
)
from .store import FaultPlan, PartitionStore, StoreSnapshot

# The ten credentials used for the reference unique-file-access experiment.
REFERENCE_USERS: tuple[tuple[str, str], ...] = (
    ("alice12", "securePass1!"),
    ("bob_smith", "bobRocks42@"),
    ("charlie.dev", "charlieCode99$"),
    ("david_w", "DavidPass123*"),
    ("emma.l", "emmaLovesCats!"),
    ("frank_t", "FrankStrongP@ss"),
    ("grace.hopper", "graceCode42#"),
    ("henry_m", "HenrySafePass1!"),
    ("isabella_99", "BellaSecret$22"),
    ("jack_admin", "AdminJack#2024"),
)

_ORACLE_LIMIT = 1 << 20


def segment_width_for(key_len: int, formula_width: int) -> int:
    """Store segment width reproducing a formula's bits-per-prefix.

    The closed forms count key_len/formula_width bits per prefix, while a
    store always cuts the 64-character hash; this returns the hash segment
    width that activates the same number of positions.
    """
    if formula_width < 1 or key_len % formula_width != 0:
        raise ConfigError(
            f"formula width {formula_width} does not divide key_len {key_len}"
        )
    per_prefix = key_len // formula_width
    if HASH_HEX_LEN % per_prefix != 0:
        raise ConfigError(
            f"{per_prefix} positions per prefix does not divide the "
            f"{HASH_HEX_LEN}-character hash"
        )
    return HASH_HEX_LEN // per_prefix


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    file_count: int
    bits_per_file: int
    radix: int = 16
    key_len: int = 64
    segment_width: int = 4
    population: int = 10
    probe_count: int = 0
    users: tuple[tuple[str, str], ...] | None = None
    fault_plan: FaultPlan | None = None
    wildcard: bool = False
    probe_full_search: bool = False

    def __post_init__(self) -> None:
        try:
            self.system_config()
        except Exception as exc:
            raise ConfigError(str(exc)) from None
        if self.population < 0:
            raise ConfigError(f"population must be >= 0, got {self.population}")
        if self.probe_count < 0:
            raise ConfigError(f"probe_count must be >= 0, got {self.probe_count}")
        if self.users is not None and len(self.users) != self.population:
            raise ConfigError(
                f"{len(self.users)} explicit users but population={self.population}"
            )

    def system_config(self) -> SystemConfig:
        return SystemConfig(
            file_count=self.file_count,
            bits_per_file=self.bits_per_file,
            key_len=self.key_len,
            segment_width=self.segment_width,
            radix=self.radix,
        )


@dataclass(frozen=True)
class UserRunResult:
    username: str
    unique_files: int
    total_lookups: int
    candidate_count: int
    recalled: bool


@dataclass(frozen=True)
class SimReport:
    config: ExperimentConfig
    users: tuple[UserRunResult, ...]
    total_new_bits: int
    popcount: int
    activated_ratio: float
    fp_probes: int
    fp_events: int
    fp_rate: float
    fp_ci_low: float
    fp_ci_high: float
    fp_any_candidate_events: int | None
    closed_form_fp: float
    closed_form_log10: float
    uniform_unique_prediction: float  # unique files if routing were uniform
    runtime_seconds: float


@dataclass(frozen=True)
class ErasurePoint:
    fraction: float
    erased_files: int
    recall: float
    mean_candidates: float
    inflation: float
    degenerate: bool


def _build_population(
    config: ExperimentConfig,
) -> tuple[PartitionStore, SystemConfig, list[tuple[Credential, str]], int]:
    """Create the store and insert the seeded population (no faults yet)."""
    rng = random.Random(config.seed)
    store = PartitionStore.create(
        config.file_count, config.bits_per_file, seed=rng.getrandbits(64)
    )
    cfg = config.system_config()
    alphabet = alphabet_for(config.radix)
    pairs: list[tuple[Credential, str]] = []
    for i in range(config.population):
        if config.users is not None:
            username, password = config.users[i]
        else:
            username = f"user-{i:06d}"
            password = f"{rng.getrandbits(64):016x}"
        key = "".join(rng.choice(alphabet) for _ in range(config.key_len))
        pairs.append((Credential(username, password), key))
    total_new_bits = 0
    for cred, key in pairs:
        receipt = insert_key(cred, key, store, cfg)
        total_new_bits += receipt.new_bits
    return store, cfg, pairs, total_new_bits


def run_population(config: ExperimentConfig) -> SimReport:
    """Insert the population, retrieve every key, probe for false positives.

    Raises `FalseNegativeError` if any inserted key is missing from its own
    retrieval while its data is intact (no faults, or wildcard mode on).
    """
    started = time.perf_counter()
    store, cfg, pairs, total_new_bits = _build_population(config)
    if config.fault_plan is not None:
        store.apply_faults(config.fault_plan)
    faults_active = config.fault_plan is not None and not config.fault_plan.is_empty()

    users: list[UserRunResult] = []
    for cred, key in pairs:
        result, _trace = lookup_trace(cred, store, cfg, config.wildcard)
        recalled = key in result.candidates
        if not recalled and (not faults_active or config.wildcard):
            raise FalseNegativeError(
                f"key stored under {cred.username!r} missing from retrieval"
            )
        users.append(
            UserRunResult(
                username=cred.username,
                unique_files=result.files_touched,
                total_lookups=result.lookups,
                candidate_count=len(result.candidates),
                recalled=recalled,
            )
        )

    rng = random.Random((config.seed << 1) ^ 0x5EED)
    alphabet = alphabet_for(config.radix)
    fp_events = 0
    any_candidate_events = 0 if config.probe_full_search else None
    for j in range(config.probe_count):
        cred = Credential(f"probe-{j:06d}", f"{rng.getrandbits(64):016x}")
        key = "".join(rng.choice(alphabet) for _ in range(config.key_len))
        if check_key(cred, key, store, cfg, config.wildcard):
            fp_events += 1
        if config.probe_full_search:
            found = retrieve_key(cred, store, cfg, config.wildcard)
            if found.candidates:
                any_candidate_events += 1

    rate = fp_events / config.probe_count if config.probe_count else 0.0
    half = (
        1.96 * math.sqrt(rate * (1 - rate) / config.probe_count)
        if config.probe_count
        else 0.0
    )
    closed = fp_probability_from_bits(
        cfg.bits_per_key, cfg.total_bits, config.population
    )
    popcount = store.popcount()
    return SimReport(
        config=config,
        users=tuple(users),
        total_new_bits=total_new_bits,
        popcount=popcount,
        activated_ratio=popcount / store.total_bits,
        fp_probes=config.probe_count,
        fp_events=fp_events,
        fp_rate=rate,
        fp_ci_low=max(0.0, rate - half),
        fp_ci_high=min(1.0, rate + half),
        fp_any_candidate_events=any_candidate_events,
        closed_form_fp=closed.probability,
        closed_form_log10=closed.log10_probability,
        uniform_unique_prediction=expected_unique_files(
            config.file_count, config.radix * config.key_len
        ),
        runtime_seconds=time.perf_counter() - started,
    )


def run_erasure_sweep(
    config: ExperimentConfig, erase_fractions: list[float]
) -> list[ErasurePoint]:
    """Measure recall and candidate-set inflation under growing erasure.

    For each fraction the population is rebuilt deterministically, that
    share of files is erased, and every inserted key is retrieved in
    wildcard mode. Recall must stay 1.0 for any fraction below 1; erasing
    everything is reported as a degenerate point rather than crashing.
    """
    for fraction in erase_fractions:
        if fraction < 0:
            raise ConfigError(f"erase fraction must be >= 0, got {fraction}")

    def measure(fraction: float, index: int) -> tuple[float, float, int, bool]:
        store, cfg, pairs, _bits = _build_population(config)
        erase_count = (
            config.file_count
            if fraction >= 1
            else int(fraction * config.file_count)
        )
        pick = random.Random((config.seed << 8) ^ index)
        erased = pick.sample(store.file_ids(), erase_count)
        store.apply_faults(FaultPlan.from_ids(erased))
        recalls = 0
        candidate_counts = []
        try:
            for cred, key in pairs:
                found = retrieve_key(cred, store, cfg, wildcard_on_missing=True)
                recalls += key in found.candidates
                candidate_counts.append(len(found.candidates))
        except DegenerateWildcard:
            return 0.0, 0.0, erase_count, True
        recall = recalls / len(pairs) if pairs else 1.0
        mean_c = statistics.fmean(candidate_counts) if candidate_counts else 0.0
        return recall, mean_c, erase_count, False

    _, baseline_mean, _, _ = measure(0.0, -1)
    points = []
    for index, fraction in enumerate(erase_fractions):
        recall, mean_c, erased_count, degenerate = measure(fraction, index)
        inflation = (
            mean_c / baseline_mean if baseline_mean and not degenerate else 0.0
        )
        points.append(
            ErasurePoint(
                fraction=fraction,
                erased_files=erased_count,
                recall=recall,
                mean_candidates=mean_c,
                inflation=inflation,
                degenerate=degenerate,
            )
        )
    return points


def brute_force_oracle(
    snapshot: StoreSnapshot,
    cred: Credential,
    key_len: int,
    radix: int,
    segment_width: int,
    wildcard_on_missing: bool = False,
) -> frozenset[str]:
    """Ground-truth candidate set by exhaustive enumeration.

    Every possible key string is tested against the snapshot's raw bitmaps
    with a private nearest-address scan; no search, routing or store code
    from the production path is involved beyond the hash-to-positions
    encoding itself (which defines the data layout being checked).
    """
    alphabet = alphabet_for(radix)
    if radix**key_len > _ORACLE_LIMIT:
        raise OracleInfeasible(
            f"{radix}^{key_len} keys exceed the enumeration limit {_ORACLE_LIMIT}"
        )
    survivors: list[str] = []
    parts = snapshot.partitions
    for chars in itertools.product(alphabet, repeat=key_len):
        key = "".join(chars)
        alive = True
        for depth in range(1, key_len + 1):
            address = derive_prefix_address(cred, key[:depth], radix)
            target = int(address, 16)
            best = None
            for part in parts:
                dist = abs(part.address - target)
                if best is None or dist < best[0] or (dist == best[0] and part.address < best[1].address):
                    best = (dist, part)
            part = best[1]
            if part.erased or part.unavailable:
                if wildcard_on_missing:
                    continue
                alive = False
                break
            mapped = segment_positions(address, snapshot.bits_per_file, segment_width)
            if not all(part.get_bit(p) for p in mapped.positions):
                alive = False
                break
        if alive:
            survivors.append(key)
    return frozenset(survivors)


@dataclass(frozen=True)
class RoutingShare:
    file_id: int
    measured_share: float
    predicted_share: float  # catchment width on the address line


def routing_histogram(
    store: PartitionStore, samples: int, seed: int
) -> list[RoutingShare]:
    """Empirical routing distribution over files versus the share each
    file's registry catchment covers on the address line."""
    rng = random.Random(seed)
    counts: dict[int, int] = {fid: 0 for fid in store.file_ids()}
    for _ in range(samples):
        handle = store.nearest_file(rng.getrandbits(256))
        counts[handle.file_id] += 1
    snapshot = store.registry_snapshot()
    entries = sorted(snapshot.entries)
    space = 1 << 256
    predicted: dict[int, float] = {}
    for i, (address, name) in enumerate(entries):
        low = 0 if i == 0 else (entries[i - 1][0] + address) // 2
        high = space if i == len(entries) - 1 else (address + entries[i + 1][0]) // 2
        file_id = int(name.split("-")[1])
        predicted[file_id] = (high - low) / space
    return [
        RoutingShare(fid, counts[fid] / samples, predicted.get(fid, 0.0))
        for fid in sorted(counts)
    ]


# -- experiment config files ---------------------------------------------------

_CONFIG_INT_KEYS = {
    "seed",
    "file_count",
    "bits_per_file",
    "radix",
    "key_len",
    "segment_width",
    "population",
    "probe_count",
}


def parse_experiment_config(
    path: str | Path,
) -> tuple[ExperimentConfig, list[float] | None]:
    """Parse a flat key = value experiment file.

    Recognised keys: the integer `ExperimentConfig` fields, ``users``
    (only the value ``reference`` is accepted), ``wildcard`` (true/false),
    ``erased`` / ``unavailable`` (comma-separated file ids) and
    ``erase_fractions`` (comma-separated floats enabling the sweep).
    Lines starting with ``#`` and blank lines are ignored.
    """
    values: dict[str, int] = {}
    users: tuple[tuple[str, str], ...] | None = None
    wildcard = False
    erased: set[int] = set()
    unavailable: set[int] = set()
    fractions: list[float] | None = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key in _CONFIG_INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {value!r}") from None
        elif key == "users":
            if value != "reference":
                raise ConfigError("only 'users = reference' is supported")
            users = REFERENCE_USERS
        elif key == "wildcard":
            if value not in ("true", "false"):
                raise ConfigError(f"wildcard must be true or false, got {value!r}")
            wildcard = value == "true"
        elif key == "erased":
            erased |= {int(tok) for tok in value.split(",") if tok.strip()}
        elif key == "unavailable":
            unavailable |= {int(tok) for tok in value.split(",") if tok.strip()}
        elif key == "erase_fractions":
            fractions = [float(tok) for tok in value.split(",") if tok.strip()]
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for required in ("seed", "file_count", "bits_per_file"):
        if required not in values:
            raise ConfigError(f"missing required config key {required!r}")
    plan = None
    if erased or unavailable:
        plan = FaultPlan(frozenset(erased), frozenset(unavailable))
    if users is not None:
        values.setdefault("population", len(users))
    config = ExperimentConfig(
        users=users, fault_plan=plan, wildcard=wildcard, **values
    )
    return config, fractions
