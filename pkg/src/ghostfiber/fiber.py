"""Fiber response model for pulse-coded probing.

Two detection modes share one geometry: time-of-flight maps a round-trip delay
t to position z = c*t/(2n). In "brillouin_gain" mode the local response is the
pump-probe gain density weighted by a unit-peak Lorentzian line; in
"backscatter" mode it is the Rayleigh backscatter density. Both reduce to a
piecewise K_i * exp(-beta*z) density, so pulse-window integrals are evaluated
with the exact segment-split antiderivative rather than a quadrature grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .validation import (
    ConfigError,
    check_fraction,
    check_non_negative,
    check_positive,
    frozen_array,
)

SPEED_OF_LIGHT_M_PER_S = 299792458.0
DEFAULT_GROUP_INDEX = 1.4682
DEFAULT_LINEWIDTH_MHZ = 30.0


def delay_to_position(delay_s, group_index: float = DEFAULT_GROUP_INDEX):
    """Round-trip delay (s) to fiber position (m): z = c*t/(2n).

    Accepts scalars or arrays; negative delays are a domain error.
    """
    t = np.asarray(delay_s, dtype=float)
    if np.any(t < 0):
        raise ValueError("delay_s must be >= 0 (no position before the launch end)")
    z = SPEED_OF_LIGHT_M_PER_S * t / (2.0 * group_index)
    return float(z) if np.isscalar(delay_s) else z


def position_to_delay(position_m, group_index: float = DEFAULT_GROUP_INDEX):
    """Inverse of delay_to_position."""
    z = np.asarray(position_m, dtype=float)
    if np.any(z < 0):
        raise ValueError("position_m must be >= 0")
    t = 2.0 * group_index * z / SPEED_OF_LIGHT_M_PER_S
    return float(t) if np.isscalar(position_m) else t


def lorentzian_line(nu_mhz, center_mhz: float, fwhm_mhz: float):
    """Unit-peak Lorentzian gain profile."""
    x = 2.0 * (np.asarray(nu_mhz, dtype=float) - center_mhz) / fwhm_mhz
    return 1.0 / (1.0 + x * x)


@dataclass(frozen=True)
class FiberSegment:
    """Uniform stretch of fiber: one resonance, one gain, one linewidth."""

    length_m: float
    bfs_mhz: float
    gain: float
    linewidth_mhz: float = DEFAULT_LINEWIDTH_MHZ
    backscatter_per_m: float | None = None

    def __post_init__(self):
        check_positive("length_m", self.length_m)
        check_positive("bfs_mhz", self.bfs_mhz)
        check_non_negative("gain", self.gain)
        check_positive("linewidth_mhz", self.linewidth_mhz)
        if self.backscatter_per_m is not None:
            check_non_negative("backscatter_per_m", self.backscatter_per_m)


@dataclass(frozen=True)
class FiberProfile:
    """Concatenated segments plus the scalars every response evaluation needs."""

    segments: tuple[FiberSegment, ...]
    group_index: float = DEFAULT_GROUP_INDEX
    attenuation_db_per_km: float = 0.2
    pump_w: float = 0.01
    probe_w: float = 0.001
    effective_area_m2: float = 1.0
    mode: str = "brillouin_gain"

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("FiberProfile needs at least one segment")
        object.__setattr__(self, "segments", segs)
        if self.group_index < 1.0:
            raise ValueError(f"group_index must be >= 1, got {self.group_index}")
        check_non_negative("attenuation_db_per_km", self.attenuation_db_per_km)
        check_positive("pump_w", self.pump_w)
        check_positive("probe_w", self.probe_w)
        check_positive("effective_area_m2", self.effective_area_m2)
        if self.mode not in ("brillouin_gain", "backscatter"):
            raise ValueError(f"mode must be 'brillouin_gain' or 'backscatter', got {self.mode!r}")
        if self.mode == "backscatter":
            missing = [i for i, s in enumerate(segs) if s.backscatter_per_m is None]
            if missing:
                raise ValueError(
                    f"backscatter mode needs backscatter_per_m on every segment; missing at {missing}"
                )

    @cached_property
    def boundaries_m(self) -> np.ndarray:
        edges = np.concatenate([[0.0], np.cumsum([s.length_m for s in self.segments])])
        return frozen_array(edges)

    @property
    def total_length_m(self) -> float:
        return float(self.boundaries_m[-1])

    @property
    def attenuation_per_m(self) -> float:
        # dB/km -> natural-log power attenuation per meter
        return self.attenuation_db_per_km * math.log(10.0) / 10.0 / 1000.0

    def segment_index(self, z) -> np.ndarray:
        """Segment holding position z; boundaries belong to the right segment."""
        z_arr = np.asarray(z, dtype=float)
        if np.any(z_arr < 0) or np.any(z_arr > self.total_length_m):
            raise ValueError(
                f"position out of range [0, {self.total_length_m}] m"
            )
        idx = np.searchsorted(self.boundaries_m, z_arr, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)


def local_gain(fiber: FiberProfile, z, nu_mhz: float):
    """Brillouin gain density g(z)/A_eff weighted by the segment's line at nu."""
    idx = fiber.segment_index(z)
    gains = np.array([s.gain for s in fiber.segments])
    centers = np.array([s.bfs_mhz for s in fiber.segments])
    widths = np.array([s.linewidth_mhz for s in fiber.segments])
    line = 1.0 / (1.0 + (2.0 * (nu_mhz - centers[idx]) / widths[idx]) ** 2)
    value = gains[idx] / fiber.effective_area_m2 * line
    return float(value) if np.isscalar(z) else value


def _segment_density(fiber: FiberProfile, nu_mhz: float) -> tuple[np.ndarray, float]:
    """Per-segment density amplitude a_i and shared decay rate beta.

    density(z) = a_i * exp(-beta*z) for z in segment i, already including the
    launch powers and all propagation/return loss factors.
    """
    alpha = fiber.attenuation_per_m
    if fiber.mode == "brillouin_gain":
        # pump decay * probe decay from the far end * return-path decay
        # = exp(-alpha*L) * exp(-alpha*z), folded into amp and beta = alpha
        line = np.array(
            [
                s.gain / fiber.effective_area_m2
                * float(lorentzian_line(nu_mhz, s.bfs_mhz, s.linewidth_mhz))
                for s in fiber.segments
            ]
        )
        amps = line * fiber.pump_w * fiber.probe_w * math.exp(-alpha * fiber.total_length_m)
        beta = alpha
    else:
        amps = np.array([s.backscatter_per_m for s in fiber.segments]) * fiber.pump_w
        beta = 2.0 * alpha
    return amps, beta


def response_density(fiber: FiberProfile, z, nu_mhz: float):
    """Detected response per meter of fiber at position z."""
    idx = fiber.segment_index(z)
    amps, beta = _segment_density(fiber, nu_mhz)
    value = amps[idx] * np.exp(-beta * np.asarray(z, dtype=float))
    return float(value) if np.isscalar(z) else value


def local_response(fiber: FiberProfile, z, nu_mhz: float, dz_m: float):
    """Response of a slice of width dz_m at z (density * dz)."""
    check_positive("dz_m", dz_m)
    return response_density(fiber, z, nu_mhz) * dz_m


def _cumulative_response(fiber: FiberProfile, nu_mhz: float):
    """Closure F with F(z) = integral of the response density over [0, z]."""
    amps, beta = _segment_density(fiber, nu_mhz)
    edges = fiber.boundaries_m
    length = fiber.total_length_m
    if beta > 0.0:
        exp_edges = np.exp(-beta * edges)
        piece = amps * (exp_edges[:-1] - exp_edges[1:]) / beta
    else:
        piece = amps * np.diff(edges)
    cum = np.concatenate([[0.0], np.cumsum(piece)])

    def cumulative(z):
        zc = np.clip(np.asarray(z, dtype=float), 0.0, length)
        idx = np.clip(np.searchsorted(edges, zc, side="right") - 1, 0, len(amps) - 1)
        if beta > 0.0:
            part = amps[idx] * (np.exp(-beta * edges[idx]) - np.exp(-beta * zc)) / beta
        else:
            part = amps[idx] * (zc - edges[idx])
        return cum[idx] + part

    return cumulative


def integrated_response(fiber: FiberProfile, nu_mhz: float, z_lo, z_hi):
    """Exact integral of the response density over [z_lo, z_hi] (clipped to the fiber)."""
    cumulative = _cumulative_response(fiber, nu_mhz)
    return cumulative(z_hi) - cumulative(z_lo)


def windowed_response(fiber: FiberProfile, nu_mhz: float, z_starts, width_m: float):
    """Integral of the response density over [z, z + width_m] for each start z.

    Windows falling partly or fully outside the fiber contribute only their
    in-fiber part (zero beyond the far end), which is what a receding pulse
    physically returns.
    """
    check_positive("width_m", width_m)
    z = np.asarray(z_starts, dtype=float)
    cumulative = _cumulative_response(fiber, nu_mhz)
    return cumulative(z + width_m) - cumulative(z)


@dataclass(frozen=True)
class TemporalImage:
    """Samples of the response on a uniform round-trip-delay grid."""

    values: np.ndarray
    delay_start_s: float
    delay_step_s: float
    frequency_mhz: float = math.nan
    group_index: float = DEFAULT_GROUP_INDEX

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError(f"values must be a non-empty 1-d array, got shape {values.shape}")
        object.__setattr__(self, "values", frozen_array(values))
        check_non_negative("delay_start_s", self.delay_start_s)
        check_positive("delay_step_s", self.delay_step_s)
        if self.group_index < 1.0:
            raise ValueError(f"group_index must be >= 1, got {self.group_index}")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def delays_s(self) -> np.ndarray:
        return self.delay_start_s + np.arange(self.values.size) * self.delay_step_s

    @property
    def positions_m(self) -> np.ndarray:
        return delay_to_position(self.delays_s, self.group_index)


def conventional_trace(
    fiber: FiberProfile,
    nu_mhz: float,
    pulse_width_s: float,
    delay_start_s: float,
    delay_step_s: float,
    count: int,
) -> TemporalImage:
    """Single-pulse trace: sample j integrates the response over the pulse
    window [z_j, z_j + w], w = c*pulse_width/(2n), at the window's leading edge.

    Samples whose window lies beyond the fiber end are 0, not an error.
    """
    check_positive("pulse_width_s", pulse_width_s)
    check_non_negative("delay_start_s", delay_start_s)
    check_positive("delay_step_s", delay_step_s)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    delays = delay_start_s + np.arange(count) * delay_step_s
    z = delay_to_position(delays, fiber.group_index)
    width = delay_to_position(pulse_width_s, fiber.group_index)
    values = windowed_response(fiber, nu_mhz, z, width)
    return TemporalImage(
        values=values,
        delay_start_s=delay_start_s,
        delay_step_s=delay_step_s,
        frequency_mhz=nu_mhz,
        group_index=fiber.group_index,
    )


def small_gain_check(fiber: FiberProfile, nu_mhz: float, interaction_length_m: float) -> float:
    """Peak relative power transfer onto the probe for one pulse interaction.

    Returns max over z of local_response(z, nu, dz=interaction_length)/P_s(z).
    Backscatter mode has no probe to amplify, so the ratio is 0 there.
    """
    check_positive("interaction_length_m", interaction_length_m)
    if fiber.mode != "brillouin_gain":
        return 0.0
    alpha = fiber.attenuation_per_m
    starts = fiber.boundaries_m[:-1]
    line = np.array(
        [
            s.gain / fiber.effective_area_m2
            * float(lorentzian_line(nu_mhz, s.bfs_mhz, s.linewidth_mhz))
            for s in fiber.segments
        ]
    )
    # S/P_s leaves pump decay and return-path decay: exp(-2*alpha*z), max at
    # each segment's near edge
    ratios = line * fiber.pump_w * interaction_length_m * np.exp(-2.0 * alpha * starts)
    return float(ratios.max())


_SEGMENT_KEYS = {"length_m", "bfs_mhz", "gain", "linewidth_mhz", "backscatter_per_m", "comment"}
_PROFILE_KEYS = {
    "schema_version",
    "segments",
    "group_index",
    "attenuation_db_per_km",
    "pump_w",
    "probe_w",
    "effective_area_m2",
    "mode",
    "comment",
}


def fiber_from_dict(data: dict) -> FiberProfile:
    """Build a profile from the JSON schema; unknown keys are config errors."""
    if not isinstance(data, dict):
        raise ConfigError("fiber config must be a JSON object")
    unknown = set(data) - _PROFILE_KEYS
    if unknown:
        raise ConfigError(f"unknown fiber config keys: {sorted(unknown)}")
    version = data.get("schema_version", 1)
    if version != 1:
        raise ConfigError(f"unsupported fiber schema_version {version!r} (expected 1)")
    raw_segments = data.get("segments")
    if not isinstance(raw_segments, list) or not raw_segments:
        raise ConfigError("fiber config needs a non-empty 'segments' array")
    segments = []
    for i, seg in enumerate(raw_segments):
        if not isinstance(seg, dict):
            raise ConfigError(f"segment {i} must be an object")
        unknown = set(seg) - _SEGMENT_KEYS
        if unknown:
            raise ConfigError(f"segment {i} has unknown keys: {sorted(unknown)}")
        try:
            segments.append(
                FiberSegment(
                    length_m=seg["length_m"],
                    bfs_mhz=seg["bfs_mhz"],
                    gain=seg["gain"],
                    linewidth_mhz=seg.get("linewidth_mhz", DEFAULT_LINEWIDTH_MHZ),
                    backscatter_per_m=seg.get("backscatter_per_m"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"segment {i}: {exc}") from exc
    try:
        return FiberProfile(
            segments=tuple(segments),
            group_index=data.get("group_index", DEFAULT_GROUP_INDEX),
            attenuation_db_per_km=data.get("attenuation_db_per_km", 0.2),
            pump_w=data.get("pump_w", 0.01),
            probe_w=data.get("probe_w", 0.001),
            effective_area_m2=data.get("effective_area_m2", 1.0),
            mode=data.get("mode", "brillouin_gain"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def fiber_to_dict(fiber: FiberProfile) -> dict:
    segs = []
    for s in fiber.segments:
        d = {
            "length_m": s.length_m,
            "bfs_mhz": s.bfs_mhz,
            "gain": s.gain,
            "linewidth_mhz": s.linewidth_mhz,
        }
        if s.backscatter_per_m is not None:
            d["backscatter_per_m"] = s.backscatter_per_m
        segs.append(d)
    return {
        "schema_version": 1,
        "segments": segs,
        "group_index": fiber.group_index,
        "attenuation_db_per_km": fiber.attenuation_db_per_km,
        "pump_w": fiber.pump_w,
        "probe_w": fiber.probe_w,
        "effective_area_m2": fiber.effective_area_m2,
        "mode": fiber.mode,
    }


def load_fiber(path) -> FiberProfile:
    """Read a fiber profile from a JSON file."""
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"fiber config not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"fiber config {p} is not valid JSON: {exc}") from exc
    return fiber_from_dict(data)
