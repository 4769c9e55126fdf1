"""Distributed spectroscopy on top of the acquisition and reconstruction
layers: sweep the pump-probe detuning, reconstruct one image per frequency,
and fit a Lorentzian per position to map the local resonance.

The fitter is a damped Gauss-Newton with the analytic Jacobian of
A / (1 + (2(nu - c)/w)^2) + B; scipy is deliberately not a runtime
dependency, it only cross-checks this fitter in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .acquisition import (
    AcquisitionPlan,
    DigitizerConfig,
    acquire,
    bit_grid_response,
    conventional_measurement,
)
from .fiber import FiberProfile, TemporalImage
from .patterns import BinaryPatternPair, random_pattern_pairs, walsh_pattern_pairs
from .reconstruction import (
    ReconstructionResult,
    dgi_reconstruct,
    interleave,
    iwht_reconstruct,
    stitch_sections,
)
from .validation import ConfigError, DataError, as_float_vector

METHODS = ("whgi", "rsgi", "iwht")


class NoPeakError(DataError):
    """The spectrum has no resolvable single peak."""


class EdgeMeasurementError(DataError):
    """The profile around the nominal edge does not contain a measurable step."""


@dataclass(frozen=True)
class LorentzianFit:
    center_mhz: float
    fwhm_mhz: float
    amplitude: float
    offset: float
    converged: bool
    iterations: int
    residual_rms: float

    def __call__(self, nu_mhz):
        u = 2.0 * (np.asarray(nu_mhz, dtype=float) - self.center_mhz) / self.fwhm_mhz
        return self.amplitude / (1.0 + u * u) + self.offset


def _noise_scale(values: np.ndarray) -> float:
    # robust sigma from first differences; /sqrt(2) undoes the difference
    diffs = np.abs(np.diff(values))
    if diffs.size == 0:
        return 0.0
    return 1.4826 * float(np.median(diffs)) / math.sqrt(2.0)


def _initial_guess(nu: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    i_max = int(np.argmax(y))
    offset = float(np.min(y))
    amplitude = float(y[i_max] - offset)
    sigma = _noise_scale(y)
    if amplitude <= 5.0 * sigma or amplitude <= 0.0:
        raise NoPeakError("no peak above the noise floor")
    if i_max == 0 or i_max == len(y) - 1:
        raise NoPeakError("peak sits on the sweep boundary")
    center = float(nu[i_max])
    half = offset + 0.5 * amplitude
    # half-height crossings by linear interpolation, walking out from the peak
    left = nu[0]
    for i in range(i_max, 0, -1):
        if y[i - 1] <= half <= y[i]:
            t = (half - y[i - 1]) / (y[i] - y[i - 1])
            left = nu[i - 1] + t * (nu[i] - nu[i - 1])
            break
    right = nu[-1]
    for i in range(i_max, len(y) - 1):
        if y[i + 1] <= half <= y[i]:
            t = (half - y[i]) / (y[i + 1] - y[i])
            right = nu[i] + t * (nu[i + 1] - nu[i])
            break
    fwhm = float(right - left)
    if fwhm <= 0.0:
        fwhm = float(nu[-1] - nu[0]) / 4.0
    return center, fwhm, amplitude, offset


def _gauss_newton(nu, y, theta, max_iter=200, tol=1e-8):
    """Levenberg-damped Gauss-Newton on (center, fwhm, amplitude, offset)."""
    span = float(nu[-1] - nu[0])
    c, w, a, b = theta

    def sse(c, w, a, b):
        u = 2.0 * (nu - c) / w
        r = y - (a / (1.0 + u * u) + b)
        return float(r @ r), r, u

    cost, r, u = sse(c, w, a, b)
    lam = 1e-3
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        den = 1.0 + u * u
        inv = 1.0 / den
        jc = 4.0 * a * u * inv * inv / w
        jw = 2.0 * a * u * u * inv * inv / w
        ja = inv
        jb = np.ones_like(nu)
        jac = np.stack([jc, jw, ja, jb], axis=1)
        g = jac.T @ r
        h = jac.T @ jac
        stepped = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(h + lam * np.diag(np.diag(h) + 1e-12), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            c_n = min(max(c + delta[0], nu[0] - span), nu[-1] + span)
            w_n = w + delta[1]
            if w_n <= 0.0:
                w_n = 0.5 * w
            a_n = a + delta[2]
            b_n = b + delta[3]
            cost_n, r_n, u_n = sse(c_n, w_n, a_n, b_n)
            if cost_n <= cost:
                rel = max(
                    abs(c_n - c) / max(w, 1e-12),
                    abs(w_n - w) / max(w, 1e-12),
                    abs(a_n - a) / max(abs(a), 1e-12),
                    abs(b_n - b) / max(abs(a), 1e-12),
                )
                c, w, a, b = c_n, w_n, a_n, b_n
                cost, r, u = cost_n, r_n, u_n
                lam = max(lam / 3.0, 1e-12)
                stepped = True
                if rel < tol:
                    converged = True
                break
            lam *= 10.0
        if converged or not stepped:
            break
    return (c, w, a, b), cost, iterations, converged


def lorentzian_fit(frequencies_mhz, values) -> LorentzianFit:
    """Fit a single Lorentzian peak; raises NoPeakError when there is none."""
    nu = as_float_vector("frequencies_mhz", frequencies_mhz)
    y = as_float_vector("values", values)
    if nu.shape != y.shape:
        raise ValueError("frequencies and values differ in length")
    if len(nu) < 5:
        raise ValueError("need at least 5 sweep points to fit a peak")
    if np.any(np.diff(nu) <= 0):
        raise ValueError("frequencies must be strictly increasing")

    theta0 = _initial_guess(nu, y)
    theta, cost, iterations, converged = _gauss_newton(nu, y, theta0)
    # retry from perturbed widths when the first basin is poor
    signal_power = float(np.sum((y - y.mean()) ** 2))
    if not converged or cost > 0.5 * signal_power:
        for factor in (0.5, 2.0, 4.0):
            alt0 = (theta0[0], theta0[1] * factor, theta0[2], theta0[3])
            alt, alt_cost, alt_iter, alt_conv = _gauss_newton(nu, y, alt0)
            if alt_cost < cost:
                theta, cost, iterations, converged = alt, alt_cost, alt_iter, alt_conv
    c, w, a, b = theta
    if a <= 0.0:
        raise NoPeakError("fit collapsed to a non-positive amplitude")
    if not nu[0] <= c <= nu[-1]:
        raise NoPeakError(f"fitted center {c:.2f} MHz lies outside the sweep")
    return LorentzianFit(
        center_mhz=float(c),
        fwhm_mhz=float(w),
        amplitude=float(a),
        offset=float(b),
        converged=bool(converged),
        iterations=iterations,
        residual_rms=math.sqrt(cost / len(nu)),
    )


class LorentzianPeakModel(BaseEstimator, RegressorMixin):
    """Single-peak Lorentzian regression with the shared Gauss-Newton core.

    X is a column of frequencies in MHz, y the spectrum samples.
    """

    def __init__(self, max_iter: int = 200, tol: float = 1e-8):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != 1:
            raise ValueError("X must be a single column of frequencies")
        y = np.asarray(y, dtype=float).ravel()
        order = np.argsort(X[:, 0])
        nu = X[order, 0]
        yy = y[order]
        theta0 = _initial_guess(nu, yy)
        theta, cost, iterations, converged = _gauss_newton(
            nu, yy, theta0, max_iter=self.max_iter, tol=self.tol
        )
        self.center_mhz_ = float(theta[0])
        self.fwhm_mhz_ = float(theta[1])
        self.amplitude_ = float(theta[2])
        self.offset_ = float(theta[3])
        self.converged_ = bool(converged)
        self.n_iter_ = iterations
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "center_mhz_")
        X = check_array(X, ensure_2d=True, dtype=float)
        u = 2.0 * (X[:, 0] - self.center_mhz_) / self.fwhm_mhz_
        return self.amplitude_ / (1.0 + u * u) + self.offset_


@dataclass(frozen=True)
class SpectrumMap:
    """values[i, j] = reconstructed response at frequencies_mhz[i], positions_m[j]."""

    frequencies_mhz: np.ndarray
    positions_m: np.ndarray
    values: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.frequencies_mhz), len(self.positions_m)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.frequencies_mhz)} frequencies x {len(self.positions_m)} positions"
            )

    def spectrum_at(self, position_m: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.positions_m - position_m)))
        return self.values[:, j]


@dataclass(frozen=True)
class BfsProfile:
    positions_m: np.ndarray
    bfs_mhz: np.ndarray
    fwhm_mhz: np.ndarray
    amplitude: np.ndarray
    converged: np.ndarray

    def __len__(self) -> int:
        return len(self.positions_m)


def default_patterns(plan: AcquisitionPlan, method: str, pattern_seed: int = 0):
    if method in ("whgi", "iwht"):
        return walsh_pattern_pairs(plan.k, plan.bit_duration_s, plan.duty_cycle)
    if method == "rsgi":
        return random_pattern_pairs(
            plan.k, plan.rsgi_pair_count, pattern_seed, plan.bit_duration_s, plan.duty_cycle
        )
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")


def _check_patterns(method: str, patterns: Sequence[BinaryPatternPair]) -> None:
    families = {p.family for p in patterns}
    if method in ("whgi", "iwht") and families != {"walsh"}:
        raise ConfigError(f"method {method!r} needs Walsh patterns, got {sorted(families)}")
    if method == "rsgi" and families != {"random"}:
        raise ConfigError(f"method 'rsgi' needs random patterns, got {sorted(families)}")


def measure_profile(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    nu_mhz: float,
    method: str = "whgi",
    patterns: Sequence[BinaryPatternPair] | None = None,
    section_digitizers: Sequence[DigitizerConfig] | None = None,
    pattern_seed: int = 0,
) -> ReconstructionResult:
    """One full distributed profile at a single detuning: acquire every
    (section, shift), reconstruct, interleave the shifts, stitch the sections.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if patterns is None:
        patterns = default_patterns(plan, method, pattern_seed)
    _check_patterns(method, patterns)
    if section_digitizers is not None and len(section_digitizers) != plan.sections:
        raise ConfigError(
            f"{len(section_digitizers)} digitizers for {plan.sections} sections"
        )

    per_section = []
    for m in range(plan.sections):
        p = plan
        if section_digitizers is not None:
            p = replace(plan, digitizer=section_digitizers[m])
        per_shift = []
        for q in range(plan.shifts):
            records = acquire(p, fiber, patterns, nu_mhz, section=m, shift=q)
            start = p.section_start_delay_s(m) + q * p.bit_duration_s / p.shifts
            if method == "iwht":
                rec = iwht_reconstruct(
                    records, patterns, delay_start_s=start, group_index=fiber.group_index
                )
            else:
                rec = dgi_reconstruct(
                    records, patterns, delay_start_s=start, group_index=fiber.group_index
                )
            per_shift.append(rec)
        per_section.append(interleave(per_shift, plan.shifts))
    return stitch_sections(per_section)


def frequency_sweep(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    method: str = "whgi",
    frequencies_mhz=None,
    patterns: Sequence[BinaryPatternPair] | None = None,
    section_digitizers: Sequence[DigitizerConfig] | None = None,
    pattern_seed: int = 0,
) -> SpectrumMap:
    """Reconstructed profile at every sweep frequency, as one map."""
    freqs = plan.frequencies_mhz if frequencies_mhz is None else tuple(frequencies_mhz)
    if not freqs:
        raise ConfigError("no sweep frequencies given (plan.frequencies_mhz is empty)")
    if patterns is None:
        patterns = default_patterns(plan, method, pattern_seed)

    rows = []
    positions = None
    seams: tuple[int, ...] = ()
    for nu in freqs:
        profile = measure_profile(
            plan, fiber, nu, method, patterns=patterns, section_digitizers=section_digitizers
        )
        if positions is None:
            positions = profile.image.positions_m
            seams = profile.seam_indices
        rows.append(profile.image.values)
    return SpectrumMap(
        frequencies_mhz=np.array(freqs, dtype=float),
        positions_m=positions,
        values=np.vstack(rows),
        method=method,
        meta={
            "n_patterns": len(patterns),
            "sections": plan.sections,
            "shifts": plan.shifts,
            "seam_indices": list(seams),
        },
    )


def conventional_full_scale(plan: AcquisitionPlan, fiber: FiberProfile) -> float:
    """Auto range for the single-pulse channel: twice the strongest-line peak."""
    count = plan.sections * plan.n_bits * plan.shifts
    step = plan.bit_duration_s / plan.shifts
    peak = 0.0
    for nu in sorted({s.bfs_mhz for s in fiber.segments}):
        trace = conventional_measurement(
            fiber, nu, plan.effective_pulse_s, 0.0, step, count, gamma=plan.gamma
        )
        peak = max(peak, float(np.max(np.abs(trace.values))))
    if peak <= 0.0:
        raise ConfigError("fiber produces no detectable response; cannot auto-range")
    return 2.0 * peak


def conventional_spectrum_map(
    plan: AcquisitionPlan,
    fiber: FiberProfile,
    frequencies_mhz=None,
    section_digitizers: Sequence[DigitizerConfig] | None = None,
    n_average: int = 1,
    full_scale: float | None = None,
) -> SpectrumMap:
    """Single-pulse sweep on the same position grid the patterned methods use.

    Each time sample is an independent read-out at the plan's conventional
    rate; n_average models shot averaging within the same measurement time.
    With section_digitizers the noise per sample matches the bucket channel of
    the section the sample falls in (same absolute sigma at each frequency),
    and the quantizer is re-ranged to the trace scale.
    """
    freqs = plan.frequencies_mhz if frequencies_mhz is None else tuple(frequencies_mhz)
    if not freqs:
        raise ConfigError("no sweep frequencies given (plan.frequencies_mhz is empty)")
    if plan.section_overlap_bits:
        raise ConfigError("the comparator grid assumes non-overlapping sections")
    if section_digitizers is not None and len(section_digitizers) != plan.sections:
        raise ConfigError(
            f"{len(section_digitizers)} digitizers for {plan.sections} sections"
        )
    count = plan.sections * plan.n_bits * plan.shifts
    step = plan.bit_duration_s / plan.shifts
    grid = plan.n_bits * plan.shifts

    digitizer = None
    if section_digitizers is not None:
        first = section_digitizers[0]
        digitizer = DigitizerConfig(
            full_scale=full_scale if full_scale is not None else conventional_full_scale(plan, fiber),
            resolution_bits=first.resolution_bits,
            noise_sigma=0.0,
            seed=first.seed,
        )

    rows = []
    positions = None
    for nu in freqs:
        sigma = None
        if section_digitizers is not None:
            per_section = [
                d.effective_sigma(
                    plan.gamma * float(bit_grid_response(plan, fiber, nu, m, 0).values.sum()) / 2.0
                )
                for m, d in enumerate(section_digitizers)
            ]
            sigma = np.repeat(per_section, grid)
        trace = conventional_measurement(
            fiber,
            nu,
            pulse_width_s=plan.effective_pulse_s,
            delay_start_s=0.0,
            delay_step_s=step,
            count=count,
            digitizer=digitizer,
            n_average=n_average,
            noise_sigma_per_sample=sigma,
            gamma=plan.gamma,
        )
        if positions is None:
            positions = trace.positions_m
        rows.append(trace.values)
    return SpectrumMap(
        frequencies_mhz=np.array(freqs, dtype=float),
        positions_m=positions,
        values=np.vstack(rows),
        method="conventional",
        meta={"n_average": n_average, "sections": plan.sections, "shifts": plan.shifts},
    )


def bfs_profile(spectrum: SpectrumMap) -> BfsProfile:
    """Per-position Lorentzian fit over the sweep axis; positions whose
    spectrum shows no usable peak become NaN rows with converged=False.
    """
    n_pos = len(spectrum.positions_m)
    bfs = np.full(n_pos, np.nan)
    fwhm = np.full(n_pos, np.nan)
    amp = np.full(n_pos, np.nan)
    conv = np.zeros(n_pos, dtype=bool)
    for j in range(n_pos):
        try:
            fit = lorentzian_fit(spectrum.frequencies_mhz, spectrum.values[:, j])
        except NoPeakError:
            continue
        bfs[j] = fit.center_mhz
        fwhm[j] = fit.fwhm_mhz
        amp[j] = fit.amplitude
        conv[j] = fit.converged
    return BfsProfile(
        positions_m=spectrum.positions_m.copy(),
        bfs_mhz=bfs,
        fwhm_mhz=fwhm,
        amplitude=amp,
        converged=conv,
    )


def _ramp_design(z: np.ndarray, z0: float, width: float) -> np.ndarray:
    return np.clip((z - z0) / width + 0.5, 0.0, 1.0)


def _fit_ramp(z: np.ndarray, v: np.ndarray, z0: float, width: float):
    """Least-squares levels for a fixed ramp geometry; returns (sse, lo, hi)."""
    s = _ramp_design(z, z0, width)
    a = np.column_stack([1.0 - s, s])
    coef, *_ = np.linalg.lstsq(a, v, rcond=None)
    r = v - a @ coef
    return float(r @ r), float(coef[0]), float(coef[1])


def edge_width(
    image: TemporalImage,
    nominal_edge_position_m: float,
    *,
    half_width_m: float | None = None,
) -> float:
    """10-90 transition distance (m) of the step nearest the nominal position.

    Fits a plateau-ramp-plateau model to the analysis window (grid search over
    center and width, exact levels per candidate), so every sample contributes
    and single noisy plateau points cannot displace the thresholds. For a
    noiseless linear transition this equals the direct 10/90 crossing distance:
    0.8 times the full transition width.
    """
    pos = image.positions_m
    if len(pos) < 2:
        raise EdgeMeasurementError("image too short for an edge measurement")
    step = float(pos[1] - pos[0])
    if half_width_m is None:
        half_width_m = 8.0 * step
    mask = np.abs(pos - nominal_edge_position_m) <= half_width_m
    if mask.sum() < 8:
        raise EdgeMeasurementError(
            f"only {int(mask.sum())} samples within {half_width_m:g} m of the edge; need >= 8"
        )
    z = pos[mask]
    v = image.values[mask]
    q = max(2, len(v) // 4)
    noise = max(float(np.std(v[:q])), float(np.std(v[-q:])), 1e-300)
    if abs(float(np.median(v[-q:])) - float(np.median(v[:q]))) <= 6.0 * noise:
        raise EdgeMeasurementError(
            "window shows no step: outer-quartile levels are indistinguishable "
            f"at noise {noise:.3g}"
        )

    span = float(z[-1] - z[0])
    centers = np.arange(z[0], z[-1] + 0.25 * step, 0.25 * step)
    widths = np.geomspace(0.3 * step, span, 32)
    best = (math.inf, 0.0, 0.0)
    for width in widths:
        for z0 in centers:
            sse, lo, hi = _fit_ramp(z, v, z0, width)
            if sse < best[0]:
                best = (sse, z0, width)
    # local refinement around the best grid cell, shrinking the bracket 3x
    # per pass; final width resolution is well under 1%
    z_half, w_factor = 0.25 * step, 1.0 / 0.75
    for _ in range(4):
        z_cands = best[1] + np.linspace(-z_half, z_half, 9)
        w_cands = best[2] * np.geomspace(1.0 / w_factor, w_factor, 9)
        for width in w_cands:
            for z0 in z_cands:
                sse, lo, hi = _fit_ramp(z, v, z0, width)
                if sse < best[0]:
                    best = (sse, z0, width)
        z_half /= 3.0
        w_factor = w_factor ** (1.0 / 3.0)
    sse, z0, width = best
    _, lo, hi = _fit_ramp(z, v, z0, width)
    dof = max(len(v) - 4, 1)
    resid = math.sqrt(sse / dof)
    if abs(hi - lo) <= 6.0 * resid:
        raise EdgeMeasurementError(
            f"fitted step {abs(hi - lo):.3g} does not clear the residual noise {resid:.3g}"
        )
    if z0 - 0.5 * width < z[0] - 0.5 * step or z0 + 0.5 * width > z[-1] + 0.5 * step:
        raise EdgeMeasurementError(
            "transition is not fully contained in the analysis window; "
            "widen half_width_m or move the nominal position"
        )
    return 0.8 * width
