"""Closed-form behaviour of the prefix-activated encoding.

Everything here follows from one counting argument. A key of L characters,
whose hash is cut into segments of width U, activates L/U bits per prefix
and L*(L/U) = L^2/U bits in total. With N keys stored in F bits:

    step 3: a given bit stays dark under one key      1 - (L^2/U)/F
    step 4: it stays dark under all N keys            (1 - (L^2/U)/F)^N
    step 5: it is activated at least once             1 - step4
    step 6: a never-inserted key finds every one of
            its L^2/U bits already lit                step5 ^ (L^2/U)

Step 6 is the false-positive probability. Its value spans hundreds of
orders of magnitude across realistic parameters, so the reference
evaluation runs under mpmath at ``PRECISION_DPS`` digits, and a pure
float64 log-space route (`fp_log10_fast`) is provided for cross-checking
and bulk sweeps.

The single exponent that matters is bits-per-key; `fp_probability_from_bits`
accepts it directly so stores whose key length differs from the fixed
64-character hash length can be scored with the same formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from mpmath import mp, mpf, power
from mpmath import log10 as mp_log10

from .errors import InvalidParams, InvalidSegmentation

PRECISION_DPS = 50

FILE_UNIT_BITS = 1 << 21  # conventional per-file size used to report F


@dataclass(frozen=True)
class AnalysisParams:
    """Symbols shared by every closed form.

    ``key_len`` plays the double role the formulas assume: number of
    prefixes per key and hash characters per key. Real deployments pin the
    hash at 64 characters; their effective bits-per-key should go through
    `fp_probability_from_bits` instead.
    """

    key_count: int
    total_bits: int
    key_len: int = 64
    segment_width: int = 4

    def __post_init__(self) -> None:
        if self.key_count < 0:
            raise InvalidParams(f"key_count must be >= 0, got {self.key_count}")
        if self.total_bits <= 0:
            raise InvalidParams(f"total_bits must be positive, got {self.total_bits}")
        if self.key_len < 1:
            raise InvalidParams(f"key_len must be >= 1, got {self.key_len}")
        if self.segment_width < 1 or self.key_len % self.segment_width != 0:
            raise InvalidSegmentation(
                f"segment_width must divide key_len={self.key_len}, "
                f"got {self.segment_width}"
            )
        if self.bits_per_key > self.total_bits:
            raise InvalidParams(
                f"one key activates {self.bits_per_key} bits but the system "
                f"only holds {self.total_bits}"
            )

    @property
    def bits_per_prefix(self) -> int:
        return self.key_len // self.segment_width

    @property
    def bits_per_key(self) -> int:
        return self.key_len * self.bits_per_prefix


def bits_per_prefix(params: AnalysisParams) -> int:
    """Bits activated by one prefix iteration."""
    return params.bits_per_prefix


def bits_per_key(params: AnalysisParams) -> int:
    """Bits activated by one complete key."""
    return params.bits_per_key


@dataclass(frozen=True)
class StepProbabilities:
    """Intermediate quantities of the false-positive derivation (mpf)."""

    bits_per_key: int
    single_key_miss: mpf  # a given bit stays dark under one key
    all_keys_miss: mpf  # ... under all stored keys
    bit_activated: mpf  # complement: lit at least once


@dataclass(frozen=True)
class FalsePositiveResult:
    probability: float  # linear value; 0.0 when it underflows float64
    log10_probability: float
    exact: mpf
    steps: StepProbabilities


def step_probabilities_from_bits(
    bits_per_key: int, total_bits: int, key_count: int
) -> StepProbabilities:
    if total_bits <= 0:
        raise InvalidParams(f"total_bits must be positive, got {total_bits}")
    if bits_per_key < 1:
        raise InvalidParams(f"bits_per_key must be >= 1, got {bits_per_key}")
    if bits_per_key > total_bits:
        raise InvalidParams(
            f"bits_per_key={bits_per_key} exceeds total_bits={total_bits}"
        )
    if key_count < 0:
        raise InvalidParams(f"key_count must be >= 0, got {key_count}")
    with mp.workdps(PRECISION_DPS):
        single = 1 - mpf(bits_per_key) / total_bits
        all_miss = power(single, key_count)
        return StepProbabilities(bits_per_key, single, all_miss, 1 - all_miss)


def step_probabilities(params: AnalysisParams) -> StepProbabilities:
    return step_probabilities_from_bits(
        params.bits_per_key, params.total_bits, params.key_count
    )


def fp_probability_from_bits(
    bits_per_key: int, total_bits: int, key_count: int
) -> FalsePositiveResult:
    """Probability that a never-inserted key finds all its bits lit."""
    steps = step_probabilities_from_bits(bits_per_key, total_bits, key_count)
    with mp.workdps(PRECISION_DPS):
        exact = power(steps.bit_activated, bits_per_key)
        log10 = float(mp_log10(exact)) if exact > 0 else float("-inf")
    return FalsePositiveResult(float(exact), log10, exact, steps)


def fp_probability(params: AnalysisParams) -> FalsePositiveResult:
    return fp_probability_from_bits(
        params.bits_per_key, params.total_bits, params.key_count
    )


def fp_log10_fast(bits_per_key: int, total_bits: int, key_count: int) -> float:
    """log10 of the false-positive probability in pure float64 log space.

    Agrees with the mpmath route to better than 12 significant digits over
    the parameter ranges of interest; useful for bulk sweeps.
    """
    if bits_per_key > total_bits:
        raise InvalidParams(
            f"bits_per_key={bits_per_key} exceeds total_bits={total_bits}"
        )
    if key_count == 0:
        return float("-inf")
    log_all_miss = key_count * math.log1p(-bits_per_key / total_bits)
    return bits_per_key * math.log1p(-math.exp(log_all_miss)) / math.log(10)


def activated_ratio(
    key_count: int, key_len: int, segment_width: float, total_bits: int
) -> float:
    """Fraction of the system's bits the stored keys are expected to light
    (linear model: key_count * key_len^2 / (segment_width * total_bits))."""
    if segment_width <= 0:
        raise InvalidParams("segment_width must be positive")
    if total_bits <= 0:
        raise InvalidParams("total_bits must be positive")
    return key_count * key_len * key_len / (segment_width * total_bits)


@dataclass(frozen=True)
class SegmentWidthSolution:
    exact_width: float  # real-valued solution
    divisor_width: int  # nearest divisor of key_len
    achieved_ratio: float  # ratio obtained with divisor_width
    underloaded: bool  # exact solution fell below 1


def solve_segment_width(
    key_count: int, key_len: int, total_bits: int, target_ratio: float
) -> SegmentWidthSolution:
    """Segment width achieving a target activated-bit ratio.

    Inverts the activated-ratio model for the width; the returned divisor
    is the divisor of ``key_len`` closest to the real solution, with the
    ratio it actually achieves. A solution below 1 means the system has so
    much headroom that even the widest segmentation stays under target.
    """
    if not 0 < target_ratio <= 1:
        raise InvalidParams(f"target_ratio must be in (0, 1], got {target_ratio}")
    if total_bits <= 0:
        raise InvalidParams("total_bits must be positive")
    exact = key_count * key_len * key_len / (target_ratio * total_bits)
    divisors = [d for d in range(1, key_len + 1) if key_len % d == 0]
    divisor = min(divisors, key=lambda d: (abs(d - exact), d))
    achieved = activated_ratio(key_count, key_len, divisor, total_bits)
    return SegmentWidthSolution(exact, divisor, achieved, exact < 1)


@dataclass(frozen=True)
class MinStorageResult:
    bits: float
    file_units: float  # bits / 2^21


def min_storage(
    key_count: int, key_len: int, segment_width: int, target_fp: float
) -> MinStorageResult:
    """Minimum total bits supporting ``key_count`` keys at the target
    false-positive probability (exact inverse of the step-6 closed form)."""
    if not 0 < target_fp < 1:
        raise InvalidParams(f"target_fp must be in (0, 1), got {target_fp}")
    if key_count < 1:
        raise InvalidParams(f"key_count must be >= 1, got {key_count}")
    if segment_width < 1 or key_len % segment_width != 0:
        raise InvalidSegmentation(
            f"segment_width must divide key_len={key_len}, got {segment_width}"
        )
    b = key_len * (key_len // segment_width)
    with mp.workdps(PRECISION_DPS):
        inner = 1 - power(mpf(target_fp), mpf(1) / b)
        denom = 1 - power(inner, mpf(1) / key_count)
        bits = mpf(b) / denom
        return MinStorageResult(float(bits), float(bits / FILE_UNIT_BITS))


def expected_unique_files(file_count: int, ops: int) -> float:
    """Expected distinct files touched by ``ops`` uniformly routed accesses
    over ``file_count`` files: K * (1 - (1 - 1/K)^ops)."""
    if file_count < 1:
        raise InvalidParams(f"file_count must be >= 1, got {file_count}")
    if ops < 0:
        raise InvalidParams(f"ops must be >= 0, got {ops}")
    if ops == 0:
        return 0.0
    if file_count == 1:
        return 1.0
    return file_count * -math.expm1(ops * math.log1p(-1.0 / file_count))
