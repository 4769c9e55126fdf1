"""Binary pulse-pattern generation for sequence-coded probing.

A pattern is a row of a natural-order (Sylvester) Hadamard matrix mapped to
{0,1} bits, or a seeded Bernoulli(1/2) row. Every pattern is transmitted
together with its bitwise complement, so a full Walsh set of order 2**k yields
2**(k+1) distinct sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .validation import check_fraction, check_int_range, check_positive, frozen_array

MAX_ORDER_EXPONENT = 16


def hadamard_matrix(k: int, max_k: int = MAX_ORDER_EXPONENT) -> np.ndarray:
    """Natural-order Hadamard matrix of size 2**k x 2**k, entries +-1 (int8).

    Built by block doubling: H_{2n} = [[H_n, H_n], [H_n, -H_n]], H_1 = [[1]].
    """
    check_int_range("k", k, 0, max_k)
    h = np.array([[1]], dtype=np.int8)
    for _ in range(k):
        h = np.block([[h, h], [h, -h]]).astype(np.int8)
    return h


@dataclass(frozen=True)
class BinaryPatternPair:
    """A transmitted bit sequence and, implicitly, its complement.

    bits: 0/1 per bit slot; the physical waveform is return-to-zero, each
    1-bit carrying a pulse of duration duty_cycle * bit_duration_s at the
    slot's leading edge.
    """

    bits: np.ndarray
    bit_duration_s: float
    duty_cycle: float
    row_index: int
    family: str = "walsh"  # "walsh" or "random"

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.size < 2:
            raise ValueError(f"bits must be a 1-d array of length >= 2, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("bits must contain only 0 and 1")
        object.__setattr__(self, "bits", frozen_array(bits, dtype=np.uint8))
        check_positive("bit_duration_s", self.bit_duration_s)
        check_fraction("duty_cycle", self.duty_cycle)
        if self.row_index < 0:
            raise ValueError(f"row_index must be >= 0, got {self.row_index}")
        if self.family not in ("walsh", "random"):
            raise ValueError(f"family must be 'walsh' or 'random', got {self.family!r}")

    @cached_property
    def inverse_bits(self) -> np.ndarray:
        inv = frozen_array(1 - self.bits.astype(np.int8), dtype=np.uint8)
        return inv

    @property
    def n_bits(self) -> int:
        return int(self.bits.size)

    @property
    def duration_s(self) -> float:
        return self.n_bits * self.bit_duration_s

    @property
    def effective_pulse_s(self) -> float:
        return self.duty_cycle * self.bit_duration_s


@dataclass(frozen=True)
class ReferencePair:
    """Integrated pulse-on time (seconds) of a pattern and of its complement."""

    on_time_s: float
    inverse_on_time_s: float


def walsh_pattern_pairs(
    k: int, bit_duration_s: float, duty_cycle: float = 0.5
) -> list[BinaryPatternPair]:
    """All 2**k Hadamard-row patterns; with complements, 2**(k+1) sequences."""
    h = hadamard_matrix(k)
    bit_duration_s = check_positive("bit_duration_s", bit_duration_s)
    duty_cycle = check_fraction("duty_cycle", duty_cycle)
    bits = ((h + 1) // 2).astype(np.uint8)
    return [
        BinaryPatternPair(bits[i], bit_duration_s, duty_cycle, row_index=i, family="walsh")
        for i in range(bits.shape[0])
    ]


def random_pattern_pairs(
    k: int, count: int, seed: int, bit_duration_s: float, duty_cycle: float = 0.5
) -> list[BinaryPatternPair]:
    """`count` seeded Bernoulli(1/2) patterns of length 2**k, plus complements."""
    check_int_range("k", k, 1, MAX_ORDER_EXPONENT)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    bit_duration_s = check_positive("bit_duration_s", bit_duration_s)
    duty_cycle = check_fraction("duty_cycle", duty_cycle)
    rng = np.random.default_rng(seed)
    bits = (rng.random((count, 2**k)) < 0.5).astype(np.uint8)
    return [
        BinaryPatternPair(bits[i], bit_duration_s, duty_cycle, row_index=i, family="random")
        for i in range(count)
    ]


def reference_pair(pattern: BinaryPatternPair) -> ReferencePair:
    """Waveform integrals of the pattern and its complement (no fiber needed)."""
    slot = pattern.duty_cycle * pattern.bit_duration_s
    ones = int(pattern.bits.sum())
    return ReferencePair(
        on_time_s=ones * slot,
        inverse_on_time_s=(pattern.n_bits - ones) * slot,
    )


def pattern_matrix(patterns: Sequence[BinaryPatternPair]) -> np.ndarray:
    """Stack pattern bits into a (count, n_bits) float matrix."""
    if not patterns:
        raise ValueError("patterns must be non-empty")
    n = patterns[0].n_bits
    for p in patterns:
        if p.n_bits != n:
            raise ValueError("patterns must share a common bit length")
    return np.stack([p.bits for p in patterns]).astype(float)


def format_patterns(patterns: Sequence[BinaryPatternPair], order: str = "interleaved") -> str:
    """Text form: header `k=<k> dt_ns=<dt> duty=<d>`, then one 0/1 row per line.

    order="interleaved" emits each pattern followed by its complement;
    order="blocked" emits all patterns, then all complements.
    """
    if order not in ("interleaved", "blocked"):
        raise ValueError(f"order must be 'interleaved' or 'blocked', got {order!r}")
    if not patterns:
        raise ValueError("patterns must be non-empty")
    first = patterns[0]
    from .validation import check_power_of_two_length

    k = check_power_of_two_length("pattern", first.n_bits)
    header = f"k={k} dt_ns={first.bit_duration_s * 1e9:g} duty={first.duty_cycle:g}"

    def row(bits: np.ndarray) -> str:
        return "".join("1" if b else "0" for b in bits)

    lines = [header]
    if order == "interleaved":
        for p in patterns:
            lines.append(row(p.bits))
            lines.append(row(p.inverse_bits))
    else:
        lines.extend(row(p.bits) for p in patterns)
        lines.extend(row(p.inverse_bits) for p in patterns)
    return "\n".join(lines) + "\n"
