"""Delimited report files and the figures rendered next to them.

Every writer is a pure function of already-computed results and formats
floats through fixed format strings, so identical inputs produce
byte-identical CSV files. Figure rendering uses the Agg backend and writes
PNG files; it never opens a window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analysis import (
    MinStorageResult,
    fp_probability_from_bits,
    min_storage,
)
from .simulate import ErasurePoint, SimReport


@dataclass(frozen=True)
class FpSweepRow:
    key_count: int
    key_len: int
    segment_width: int
    total_bits: int
    probability: float
    log10_probability: float


def fp_sweep(
    key_counts: Sequence[int], key_len: int, segment_width: int, total_bits: int
) -> list[FpSweepRow]:
    bits = key_len * (key_len // segment_width)
    rows = []
    for n in key_counts:
        result = fp_probability_from_bits(bits, total_bits, n)
        rows.append(
            FpSweepRow(
                n, key_len, segment_width, total_bits,
                result.probability, result.log10_probability,
            )
        )
    return rows


@dataclass(frozen=True)
class MinStorageRow:
    target_fp: float
    result: MinStorageResult


def min_storage_sweep(
    targets: Sequence[float], key_count: int, key_len: int, segment_width: int
) -> list[MinStorageRow]:
    return [
        MinStorageRow(p, min_storage(key_count, key_len, segment_width, p))
        for p in targets
    ]


def _open_csv(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="", encoding="ascii")


def write_fp_table(rows: Sequence[FpSweepRow], path: str | Path) -> None:
    path = Path(path)
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["key_count", "key_len", "segment_width", "total_bits", "p_fp", "log10_p_fp"]
        )
        for r in rows:
            writer.writerow(
                [
                    r.key_count,
                    r.key_len,
                    r.segment_width,
                    r.total_bits,
                    f"{r.probability:.6e}",
                    f"{r.log10_probability:.6f}",
                ]
            )


def write_min_storage_table(rows: Sequence[MinStorageRow], path: str | Path) -> None:
    path = Path(path)
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p_fp", "min_bits", "file_units_2pow21"])
        for r in rows:
            writer.writerow(
                [f"{r.target_fp:.6e}", f"{r.result.bits:.2f}", f"{r.result.file_units:.4f}"]
            )


def write_population_csv(report: SimReport, path: str | Path) -> None:
    """Per-user unique-file counts; total_lookups is an extra column the
    reference results do not carry."""
    path = Path(path)
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["username", "unique_files", "total_lookups", "candidates"])
        for user in sorted(report.users, key=lambda u: u.username):
            writer.writerow(
                [user.username, user.unique_files, user.total_lookups, user.candidate_count]
            )


def write_erasure_csv(points: Sequence[ErasurePoint], path: str | Path) -> None:
    path = Path(path)
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["fraction", "erased_files", "recall", "mean_candidates", "inflation", "degenerate"]
        )
        for p in points:
            writer.writerow(
                [
                    f"{p.fraction:.4f}",
                    p.erased_files,
                    f"{p.recall:.4f}",
                    f"{p.mean_candidates:.4f}",
                    f"{p.inflation:.4f}",
                    int(p.degenerate),
                ]
            )


# -- figures -------------------------------------------------------------------


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_fp_figure(rows: Sequence[FpSweepRow], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot([r.key_count for r in rows], [r.log10_probability for r in rows], "o-")
    ax.set_xlabel("stored keys")
    ax.set_ylabel("log10 false-positive probability")
    ax.set_title("False-positive probability vs. stored keys")
    ax.grid(True, alpha=0.4)
    _save(fig, Path(path))


def render_min_storage_figure(rows: Sequence[MinStorageRow], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot([r.target_fp for r in rows], [r.result.file_units for r in rows], "o-")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("target false-positive probability")
    ax.set_ylabel("required bits / 2^21")
    ax.set_title("Minimum storage vs. false-positive target")
    ax.grid(True, alpha=0.4)
    _save(fig, Path(path))


def render_population_figure(report: SimReport, path: str | Path) -> None:
    users = sorted(report.users, key=lambda u: u.username)
    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    ax.bar(range(len(users)), [u.unique_files for u in users], color="steelblue")
    ax.set_xticks(range(len(users)))
    ax.set_xticklabels([u.username for u in users], rotation=45, ha="right")
    ax.set_ylabel("unique files accessed")
    ax.set_title(
        f"Unique file accesses per retrieval "
        f"({report.config.file_count} files, radix {report.config.radix})"
    )
    ax.grid(True, axis="y", alpha=0.4)
    _save(fig, Path(path))


def render_erasure_figure(points: Sequence[ErasurePoint], path: str | Path) -> None:
    live = [p for p in points if not p.degenerate]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot([p.fraction for p in live], [p.recall for p in live], "o-", label="recall")
    ax.set_xlabel("erased fraction")
    ax.set_ylabel("recall")
    ax.set_ylim(0, 1.05)
    ax2 = ax.twinx()
    ax2.plot(
        [p.fraction for p in live],
        [p.inflation for p in live],
        "s--",
        color="darkorange",
        label="candidate inflation",
    )
    ax2.set_ylabel("candidate-set inflation")
    lines1, labels1 = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines1 + lines2, labels1 + labels2, loc="center left")
    ax.set_title("Erasure resilience under wildcard retrieval")
    ax.grid(True, alpha=0.4)
    _save(fig, Path(path))
