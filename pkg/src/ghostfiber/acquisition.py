"""Bucket-detection acquisition: integrate patterned probing into one value
per transmitted sequence, at a sample rate of one bucket per sequence period.

Acquisition is purely functional: every call derives a private RNG stream from
(seed, frequency, section, shift), so results are reproducible regardless of
evaluation order and identical noise is never shared between acquisitions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .fiber import FiberProfile, TemporalImage, conventional_trace, delay_to_position, small_gain_check
from .patterns import BinaryPatternPair, pattern_matrix
from .validation import (
    ConfigError,
    check_fraction,
    check_int_range,
    check_non_negative,
    check_positive,
)

CLIP_WARNING_FRACTION = 0.01


@dataclass(frozen=True)
class DigitizerConfig:
    """Bucket digitizer: additive Gaussian noise, then bipolar quantization.

    full_scale and noise_sigma are in the same (gamma-scaled) units as the
    buckets. noise_fraction adds source-intensity-type noise proportional to
    the mean bucket of the acquisition at hand (gamma * total response / 2),
    so it tracks the actual signal level at each probe frequency. Codes span
    [-full_scale, +full_scale] in 2**resolution_bits steps, so the round-off
    error is at most full_scale/2**resolution_bits.
    """

    full_scale: float
    resolution_bits: int = 14
    noise_sigma: float = 0.0
    noise_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_positive("full_scale", self.full_scale)
        check_int_range("resolution_bits", self.resolution_bits, 8, 24)
        check_non_negative("noise_sigma", self.noise_sigma)
        check_non_negative("noise_fraction", self.noise_fraction)

    @property
    def step(self) -> float:
        return 2.0 * self.full_scale / (2**self.resolution_bits)

    def effective_sigma(self, mean_bucket: float) -> float:
        return self.noise_sigma + self.noise_fraction * abs(mean_bucket)


@dataclass(frozen=True)
class AcquisitionRecord:
    """One sequence transmission: bucket for the pattern and for its complement."""

    row_index: int
    bucket: float
    bucket_inverse: float
    section: int = 0
    shift: int = 0
    frequency_mhz: float = math.nan
    clip_count: int = 0


@dataclass(frozen=True)
class AcquisitionPlan:
    """Everything the acquisition needs beyond the fiber and the patterns."""

    k: int
    bit_duration_s: float
    duty_cycle: float = 0.5
    sections: int = 1
    shifts: int = 5
    frequencies_mhz: tuple[float, ...] = ()
    digitizer: DigitizerConfig | None = None
    gamma: float = 1.0
    small_gain_threshold: float = 0.01
    rsgi_pairs: int | None = None
    section_overlap_bits: int = 0

    def __post_init__(self):
        check_int_range("k", self.k, 1, 16)
        check_positive("bit_duration_s", self.bit_duration_s)
        check_fraction("duty_cycle", self.duty_cycle)
        check_int_range("sections", self.sections, 1, 10000)
        check_int_range("shifts", self.shifts, 1, 10000)
        check_positive("gamma", self.gamma)
        check_positive("small_gain_threshold", self.small_gain_threshold)
        if self.rsgi_pairs is not None:
            check_int_range("rsgi_pairs", self.rsgi_pairs, 1, 10**7)
        check_int_range("section_overlap_bits", self.section_overlap_bits, 0, self.n_bits - 1)
        object.__setattr__(self, "frequencies_mhz", tuple(float(f) for f in self.frequencies_mhz))

    @property
    def n_bits(self) -> int:
        return 2**self.k

    @property
    def sequence_duration_s(self) -> float:
        return self.n_bits * self.bit_duration_s

    @property
    def sample_rate_hz(self) -> float:
        """One bucket per transmitted sequence."""
        return 1.0 / self.sequence_duration_s

    @property
    def conventional_rate_hz(self) -> float:
        """Single-pulse acquisition rate matching the interleaved read-out grid."""
        return self.shifts / self.bit_duration_s

    @property
    def rate_reduction_factor(self) -> int:
        """conventional_rate / sample_rate as an exact integer."""
        return self.n_bits * self.shifts

    @property
    def effective_pulse_s(self) -> float:
        return self.duty_cycle * self.bit_duration_s

    @property
    def rsgi_pair_count(self) -> int:
        return self.rsgi_pairs if self.rsgi_pairs is not None else 16 * self.n_bits

    def bit_spacing_m(self, group_index: float) -> float:
        return delay_to_position(self.bit_duration_s, group_index)

    def section_stride_bits(self) -> int:
        return self.n_bits - self.section_overlap_bits

    def section_start_delay_s(self, section: int) -> float:
        return section * self.section_stride_bits() * self.bit_duration_s

    def section_span_m(self, group_index: float) -> float:
        return self.n_bits * self.bit_spacing_m(group_index)

    def required_sections(self, fiber: FiberProfile) -> int:
        """Smallest section count whose tiled windows reach the fiber end."""
        n_bits_needed = fiber.total_length_m / self.bit_spacing_m(fiber.group_index)
        stride = self.section_stride_bits()
        extra = (n_bits_needed - self.n_bits) / stride
        return max(1, 1 + math.ceil(extra - 1e-9))

    def validate_coverage(self, fiber: FiberProfile) -> None:
        needed = self.required_sections(fiber)
        if self.sections < needed:
            raise ConfigError(
                f"plan covers only {self.sections} section(s) of a fiber needing "
                f"{needed} (k={self.k}, bit_duration={self.bit_duration_s * 1e9:g} ns, "
                f"length={fiber.total_length_m:g} m)"
            )


def minimum_single_sequence_order(
    fiber_length_m: float, bit_duration_s: float, group_index: float
) -> int:
    """Smallest k for which one 2**k-bit sequence spans the whole fiber."""
    check_positive("fiber_length_m", fiber_length_m)
    spacing = delay_to_position(bit_duration_s, group_index)
    k = 1
    while (2**k) * spacing < fiber_length_m:
        k += 1
        if k > 64:
            raise ValueError("fiber too long for any practical sequence order")
    return k


def quantize(values: np.ndarray, digitizer: DigitizerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Round to the digitizer grid; returns (quantized, clipped_mask)."""
    step = digitizer.step
    codes = np.rint(np.asarray(values, dtype=float) / step)
    half = 2 ** (digitizer.resolution_bits - 1)
    clipped = (codes < -half) | (codes > half - 1)
    codes = np.clip(codes, -half, half - 1)
    return codes * step, clipped


def integrate_pattern(
    pattern: BinaryPatternPair, response: TemporalImage, gamma: float = 1.0
) -> tuple[float, float]:
    """Bucket values for a pattern and its complement from per-bit responses.

    `response` must be sampled on the pattern's bit grid: one value per bit,
    each the pulse-window integral at that bit's leading edge.
    """
    check_positive("gamma", gamma)
    if len(response) != pattern.n_bits:
        raise ValueError(
            f"response has {len(response)} samples but the pattern has {pattern.n_bits} bits"
        )
    if abs(response.delay_step_s - pattern.bit_duration_s) > 1e-9 * pattern.bit_duration_s:
        raise ValueError(
            "response grid step does not match the pattern bit duration "
            f"({response.delay_step_s} s vs {pattern.bit_duration_s} s)"
        )
    values = response.values
    bucket = gamma * float(pattern.bits @ values)
    bucket_inverse = gamma * float(values.sum() - pattern.bits @ values)
    return bucket, bucket_inverse


def bit_grid_response(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    nu_mhz: float,
    section: int = 0,
    shift: int = 0,
) -> TemporalImage:
    """Noiseless per-bit responses for one (section, shift) acquisition grid."""
    start = plan.section_start_delay_s(section) + shift * plan.bit_duration_s / plan.shifts
    return conventional_trace(
        fiber,
        nu_mhz,
        pulse_width_s=plan.effective_pulse_s,
        delay_start_s=start,
        delay_step_s=plan.bit_duration_s,
        count=plan.n_bits,
    )


def _noise_rng(seed: int, nu_mhz: float, section: int, shift: int) -> np.random.Generator:
    # private stream per acquisition; domain tag 1 = bucket noise
    return np.random.default_rng([int(seed), 1, int(round(nu_mhz * 1e6)), int(section), int(shift)])


def acquire(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    patterns: Sequence[BinaryPatternPair],
    nu_mhz: float,
    section: int = 0,
    shift: int = 0,
) -> list[AcquisitionRecord]:
    """Simulate the bucket measurements of one (frequency, section, shift) run."""
    if not 0 <= section < plan.sections:
        raise ConfigError(f"section {section} out of range for a {plan.sections}-section plan")
    if not 0 <= shift < plan.shifts:
        raise ConfigError(f"shift {shift} out of range for {plan.shifts} trigger shifts")
    plan.validate_coverage(fiber)

    for p in patterns:
        if p.n_bits != plan.n_bits:
            raise ValueError(f"pattern length {p.n_bits} does not match plan (2**{plan.k})")
        if abs(p.bit_duration_s - plan.bit_duration_s) > 1e-9 * plan.bit_duration_s:
            raise ValueError("pattern bit duration does not match the plan")

    ratio = small_gain_check(
        fiber, nu_mhz, delay_to_position(plan.effective_pulse_s, fiber.group_index)
    )
    if ratio > plan.small_gain_threshold:
        warnings.warn(
            f"small-gain assumption stressed: peak relative transfer {ratio:.3g} "
            f"exceeds {plan.small_gain_threshold:g}",
            stacklevel=2,
        )

    response = bit_grid_response(plan, fiber, nu_mhz, section, shift)
    bits = pattern_matrix(patterns)
    per_bit = response.values
    buckets = plan.gamma * (bits @ per_bit)
    buckets_inv = plan.gamma * (per_bit.sum() - bits @ per_bit)

    clipped = np.zeros((len(patterns), 2), dtype=bool)
    digitizer = plan.digitizer
    if digitizer is not None:
        # ensemble mean bucket of this acquisition (pattern + complement halves)
        sigma = digitizer.effective_sigma(plan.gamma * per_bit.sum() / 2.0)
        if sigma > 0.0:
            rng = _noise_rng(digitizer.seed, nu_mhz, section, shift)
            eps = rng.normal(0.0, sigma, size=(len(patterns), 2))
            buckets = buckets + eps[:, 0]
            buckets_inv = buckets_inv + eps[:, 1]
        buckets, clip_a = quantize(buckets, digitizer)
        buckets_inv, clip_b = quantize(buckets_inv, digitizer)
        clipped[:, 0] = clip_a
        clipped[:, 1] = clip_b
        total_clipped = int(clipped.sum())
        if total_clipped > CLIP_WARNING_FRACTION * clipped.size:
            warnings.warn(
                f"digitizer clipped {total_clipped} of {clipped.size} buckets "
                f"(full_scale={digitizer.full_scale:g})",
                stacklevel=2,
            )

    return [
        AcquisitionRecord(
            row_index=p.row_index,
            bucket=float(buckets[i]),
            bucket_inverse=float(buckets_inv[i]),
            section=section,
            shift=shift,
            frequency_mhz=nu_mhz,
            clip_count=int(clipped[i].sum()),
        )
        for i, p in enumerate(patterns)
    ]


def acquire_interleaved(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    patterns: Sequence[BinaryPatternPair],
    nu_mhz: float,
    section: int = 0,
) -> list[list[AcquisitionRecord]]:
    """All trigger shifts of one section, in shift order."""
    return [acquire(plan, fiber, patterns, nu_mhz, section, q) for q in range(plan.shifts)]


def acquire_sectioned(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    patterns: Sequence[BinaryPatternPair],
    nu_mhz: float,
) -> list[list[list[AcquisitionRecord]]]:
    """All sections x shifts; raises a configuration error on under-coverage."""
    plan.validate_coverage(fiber)
    return [
        acquire_interleaved(plan, fiber, patterns, nu_mhz, m) for m in range(plan.sections)
    ]


def conventional_measurement(
    fiber: FiberProfile,
    nu_mhz: float,
    pulse_width_s: float,
    delay_start_s: float,
    delay_step_s: float,
    count: int,
    digitizer: DigitizerConfig | None = None,
    n_average: int = 1,
    noise_sigma_per_sample: np.ndarray | float | None = None,
    gamma: float = 1.0,
) -> TemporalImage:
    """Single-pulse comparator: oracle trace plus the same noise/quantization
    model applied per time sample, averaged over n_average shots.

    noise_sigma_per_sample overrides the digitizer's sigma (scalar or one value
    per sample), for position-dependent noise referencing. gamma scales the
    trace before noise enters, so sigma shares units with the bucket noise.
    """
    if n_average < 1:
        raise ValueError(f"n_average must be >= 1, got {n_average}")
    trace = conventional_trace(fiber, nu_mhz, pulse_width_s, delay_start_s, delay_step_s, count)
    values = gamma * trace.values
    if digitizer is None:
        return TemporalImage(
            values=values,
            delay_start_s=delay_start_s,
            delay_step_s=delay_step_s,
            frequency_mhz=nu_mhz,
            group_index=fiber.group_index,
        )
    sigma = digitizer.noise_sigma if noise_sigma_per_sample is None else noise_sigma_per_sample
    sigma_arr = np.broadcast_to(np.asarray(sigma, dtype=float), values.shape)
    values = values.copy()
    if np.any(sigma_arr > 0):
        # domain tag 2 = trace noise
        rng = np.random.default_rng([int(digitizer.seed), 2, int(round(nu_mhz * 1e6))])
        values = values + rng.normal(0.0, 1.0, size=values.shape) * sigma_arr / math.sqrt(n_average)
    values, clipped = quantize(values, digitizer)
    if clipped.sum() > CLIP_WARNING_FRACTION * clipped.size:
        warnings.warn(
            f"comparator digitizer clipped {int(clipped.sum())} of {clipped.size} samples",
            stacklevel=2,
        )
    return TemporalImage(
        values=values,
        delay_start_s=delay_start_s,
        delay_step_s=delay_step_s,
        frequency_mhz=nu_mhz,
        group_index=fiber.group_index,
    )


def section_reference_levels(plan: AcquisitionPlan, fiber: FiberProfile) -> np.ndarray:
    """Per-section total bit-grid response at the section's strongest line.

    The candidates are the fiber's segment resonances; the result anchors
    noise and full-scale resolution independently of probe frequency and of
    the realized pattern set (full-ensemble mean bucket = gamma*u/2).
    """
    candidates = sorted({s.bfs_mhz for s in fiber.segments})
    levels = np.zeros(plan.sections)
    for m in range(plan.sections):
        totals = [
            float(bit_grid_response(plan, fiber, nu, m, 0).values.sum()) for nu in candidates
        ]
        levels[m] = max(totals)
    return levels


def resolve_digitizers(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    *,
    resolution_bits: int = 14,
    seed: int = 0,
    noise_fraction: float | None = None,
    noise_sigma: float | None = None,
    full_scale: float | None = None,
) -> list[DigitizerConfig]:
    """One digitizer per section, auto-ranged to the section's signal level.

    Auto full scale is 2 * gamma * u_ref(m), where u_ref(m) is the section's
    total bit-grid response at the fiber's strongest line: it bounds every
    bucket at every sweep frequency with headroom, deterministically. Noise is
    either an absolute sigma or a fraction of the mean bucket (applied at
    acquisition time, so it follows the signal level at each frequency).
    """
    if noise_fraction is not None and noise_sigma is not None:
        raise ConfigError("give either noise_fraction or noise_sigma, not both")
    levels = plan.gamma * section_reference_levels(plan, fiber)
    if full_scale is None and levels.max() <= 0.0:
        raise ConfigError("fiber produces no detectable response; cannot auto-range")
    floor = 1e-9 * levels.max() if levels.max() > 0 else 1.0
    configs = []
    for m in range(plan.sections):
        scale = full_scale if full_scale is not None else max(2.0 * levels[m], floor)
        configs.append(
            DigitizerConfig(
                full_scale=scale,
                resolution_bits=resolution_bits,
                noise_sigma=noise_sigma or 0.0,
                noise_fraction=noise_fraction or 0.0,
                seed=seed,
            )
        )
    return configs


def plan_with_section_digitizer(
    plan: AcquisitionPlan, digitizers: Sequence[DigitizerConfig], section: int
) -> AcquisitionPlan:
    """Plan variant carrying the digitizer resolved for one section."""
    return replace(plan, digitizer=digitizers[section])
