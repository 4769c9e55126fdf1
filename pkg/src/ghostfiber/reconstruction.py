"""Image formation from bucket records: differential ghost imaging for any
binary pattern family, and the exact inverse fast Walsh-Hadamard route for a
complete Walsh set.

Both reconstructions use each pattern together with its complement, so every
pixel is illuminated in exactly half of the effective measurement ensemble.
References enter in units of pulse counts (on-time divided by the effective
pulse duration); with that normalization the differential estimator returns
the per-bit response exactly for a complete Walsh set, independent of gamma
up to overall scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fiber import DEFAULT_GROUP_INDEX, TemporalImage
from .patterns import BinaryPatternPair, ReferencePair, pattern_matrix, reference_pair
from .validation import DataError, check_power_of_two_length


@dataclass(frozen=True)
class ReconstructionResult:
    image: TemporalImage
    method: str
    n_measurements: int
    section: int = 0
    shift_index: int | None = 0
    seam_indices: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.image)


def fast_walsh_hadamard(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform (natural/Hadamard ordering).

    Equivalent to values @ H.T for the 2**k block-doubled matrix; O(N log N).
    """
    x = np.array(values, dtype=float)
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    check_power_of_two_length("transform length", n)
    h = 1
    while h < n:
        x = x.reshape(x.shape[:-1] + (n // (2 * h), 2, h))
        a = x[..., 0, :]
        b = x[..., 1, :]
        x = np.stack((a + b, a - b), axis=-2)
        x = x.reshape(x.shape[:-3] + (n,))
        h *= 2
    return np.moveaxis(x, -1, axis)


def _collect(
    records: Sequence, patterns: Sequence[BinaryPatternPair]
) -> tuple[np.ndarray, np.ndarray, list[BinaryPatternPair]]:
    """Match records to patterns by row index; returns (D, D_inv, patterns_used)."""
    if not records:
        raise DataError("no acquisition records to reconstruct from")
    by_row = {p.row_index: p for p in patterns}
    if len(by_row) != len(patterns):
        raise DataError("duplicate row indices in the pattern list")
    matched = []
    for r in records:
        if r.row_index not in by_row:
            raise DataError(f"record references unknown pattern row {r.row_index}")
        matched.append(by_row[r.row_index])
    sections = {r.section for r in records}
    shifts = {r.shift for r in records}
    if len(sections) > 1 or len(shifts) > 1:
        raise DataError(
            f"records mix sections {sorted(sections)} / shifts {sorted(shifts)}; "
            "reconstruct each (section, shift) separately"
        )
    d = np.array([r.bucket for r in records], dtype=float)
    d_inv = np.array([r.bucket_inverse for r in records], dtype=float)
    return d, d_inv, matched


def dgi_reconstruct(
    records: Sequence,
    patterns: Sequence[BinaryPatternPair],
    references: Sequence[ReferencePair] | None = None,
    *,
    delay_start_s: float = 0.0,
    group_index: float = DEFAULT_GROUP_INDEX,
) -> ReconstructionResult:
    """Differential ghost imaging over the pattern-plus-complement ensemble.

    out_j = <D>/<R> + (<D I_j> - (<D>/<R>) <R I_j>) / <I_j>^2, with the
    complement buckets folded in as measurements of the inverted patterns.
    """
    d, d_inv, matched = _collect(records, patterns)
    if references is None:
        references = [reference_pair(p) for p in matched]
    elif len(references) != len(matched):
        raise DataError("references do not match the record count")

    pulse = matched[0].effective_pulse_s
    counts = np.array([ref.on_time_s / pulse for ref in references], dtype=float)
    counts_inv = np.array([ref.inverse_on_time_s / pulse for ref in references], dtype=float)

    bits = pattern_matrix(matched)
    ens_i = np.vstack([bits, 1.0 - bits])
    ens_d = np.concatenate([d, d_inv])
    ens_r = np.concatenate([counts, counts_inv])

    m2 = ens_i.shape[0]
    mean_i = ens_i.mean(axis=0)
    mean_d = ens_d.mean()
    mean_r = ens_r.mean()
    if mean_r <= 0:
        raise DataError("reference on-times are all zero")
    base = mean_d / mean_r
    corr = (ens_d @ ens_i) / m2 - base * (ens_r @ ens_i) / m2
    out = np.full(bits.shape[1], base)
    lit = mean_i > 0
    out[lit] = base + corr[lit] / mean_i[lit] ** 2

    rec0 = records[0]
    image = TemporalImage(
        values=out,
        delay_start_s=delay_start_s,
        delay_step_s=matched[0].bit_duration_s,
        frequency_mhz=rec0.frequency_mhz,
        group_index=group_index,
    )
    method = "whgi" if matched[0].family == "walsh" else "rsgi"
    return ReconstructionResult(
        image=image,
        method=method,
        n_measurements=len(records),
        section=rec0.section,
        shift_index=rec0.shift,
    )


def iwht_reconstruct(
    records: Sequence,
    patterns: Sequence[BinaryPatternPair],
    *,
    transform_mode: str = "fast",
    delay_start_s: float = 0.0,
    group_index: float = DEFAULT_GROUP_INDEX,
) -> ReconstructionResult:
    """Exact inversion for a complete Walsh set via (1/N) H (D - D_inv).

    Requires every Hadamard row exactly once; raises on gaps or duplicates.
    """
    d, d_inv, matched = _collect(records, patterns)
    n = len(matched)
    check_power_of_two_length("record count", n)
    rows = sorted(p.row_index for p in matched)
    if rows != list(range(n)):
        missing = sorted(set(range(n)) - set(rows))[:8]
        raise DataError(f"incomplete Walsh set: missing rows {missing}")
    if any(p.family != "walsh" for p in matched):
        raise DataError("inverse Hadamard reconstruction needs Walsh patterns")

    order = np.argsort([p.row_index for p in matched])
    diff = (d - d_inv)[order]
    if transform_mode == "fast":
        image = fast_walsh_hadamard(diff) / n
    elif transform_mode == "dense":
        bits = pattern_matrix(matched)[order]
        image = (2.0 * bits - 1.0).T @ diff / n
    else:
        raise ValueError(f"unknown transform_mode {transform_mode!r}")

    rec0 = records[0]
    out = TemporalImage(
        values=image,
        delay_start_s=delay_start_s,
        delay_step_s=matched[0].bit_duration_s,
        frequency_mhz=rec0.frequency_mhz,
        group_index=group_index,
    )
    return ReconstructionResult(
        image=out,
        method="iwht",
        n_measurements=len(records),
        section=rec0.section,
        shift_index=rec0.shift,
    )


def interleave(results: Sequence[ReconstructionResult], shifts: int) -> ReconstructionResult:
    """Merge per-shift images of one section onto a grid `shifts` times finer.

    Shift q lands on output samples q, q+shifts, q+2*shifts, ...
    """
    if len(results) != shifts:
        raise DataError(f"expected {shifts} shift images, got {len(results)}")
    by_shift = sorted(results, key=lambda r: r.shift_index)
    if [r.shift_index for r in by_shift] != list(range(shifts)):
        raise DataError("shift indices must be exactly 0..shifts-1")
    first = by_shift[0].image
    step = first.delay_step_s
    fine_step = step / shifts
    n = len(first)
    out = np.empty(n * shifts)
    for q, res in enumerate(by_shift):
        img = res.image
        if len(img) != n or abs(img.delay_step_s - step) > 1e-9 * step:
            raise DataError("shift images differ in length or grid step")
        expected = first.delay_start_s + q * fine_step
        if abs(img.delay_start_s - expected) > 1e-6 * fine_step:
            raise DataError(f"shift {q} image starts at {img.delay_start_s}, expected {expected}")
        if res.section != by_shift[0].section:
            raise DataError("cannot interleave images from different sections")
        out[q::shifts] = img.values
    image = TemporalImage(
        values=out,
        delay_start_s=first.delay_start_s,
        delay_step_s=fine_step,
        frequency_mhz=first.frequency_mhz,
        group_index=first.group_index,
    )
    return ReconstructionResult(
        image=image,
        method=by_shift[0].method,
        n_measurements=sum(r.n_measurements for r in by_shift),
        section=by_shift[0].section,
        shift_index=None,
    )


def stitch_sections(results: Sequence[ReconstructionResult]) -> ReconstructionResult:
    """Concatenate per-section images into one contiguous profile.

    Sections must tile the delay axis without gaps; seam sample indices are
    recorded in the result.
    """
    if not results:
        raise DataError("nothing to stitch")
    ordered = sorted(results, key=lambda r: r.section)
    sections = [r.section for r in ordered]
    if sections != list(range(sections[0], sections[0] + len(ordered))):
        missing = sorted(set(range(sections[0], sections[-1] + 1)) - set(sections))
        raise DataError(f"cannot stitch: missing sections {missing}")
    step = ordered[0].image.delay_step_s
    pieces = []
    seams = []
    cursor = ordered[0].image.delay_start_s
    total = 0
    for res in ordered:
        img = res.image
        if abs(img.delay_step_s - step) > 1e-9 * step:
            raise DataError("sections disagree on the delay grid step")
        if abs(img.delay_start_s - cursor) > 1e-6 * step:
            raise DataError(
                f"section {res.section} starts at {img.delay_start_s:.6e} s, "
                f"expected {cursor:.6e} s; sections do not tile the delay axis"
            )
        pieces.append(img.values)
        total += len(img)
        seams.append(total)
        cursor = img.delay_start_s + len(img) * step
    seams = seams[:-1]
    image = TemporalImage(
        values=np.concatenate(pieces),
        delay_start_s=ordered[0].image.delay_start_s,
        delay_step_s=step,
        frequency_mhz=ordered[0].image.frequency_mhz,
        group_index=ordered[0].image.group_index,
    )
    return ReconstructionResult(
        image=image,
        method=ordered[0].method,
        n_measurements=sum(r.n_measurements for r in ordered),
        section=ordered[0].section,
        shift_index=None,
        seam_indices=tuple(seams),
    )


def snr_estimate(image: TemporalImage, region_m: tuple[float, float]) -> float:
    """Mean over std (ddof=1) of the samples inside a flat position window."""
    lo, hi = region_m
    pos = image.positions_m
    mask = (pos >= lo) & (pos <= hi)
    if mask.sum() < 8:
        raise DataError(f"region [{lo}, {hi}] m holds {int(mask.sum())} samples; need >= 8")
    vals = image.values[mask]
    std = float(np.std(vals, ddof=1))
    if std == 0.0:
        return math.inf
    return float(np.mean(vals)) / std


class DifferentialGhostImager(BaseEstimator, TransformerMixin):
    """Batch differential ghost imaging as a transformer.

    Rows of X are acquisitions: the first half of each row holds the pattern
    buckets, the second half the complement buckets, column order matching
    `patterns`. transform returns one reconstructed per-bit image per row.
    """

    def __init__(self, patterns: Sequence[BinaryPatternPair] | None = None):
        self.patterns = patterns

    def fit(self, X, y=None):
        if self.patterns is None or len(self.patterns) == 0:
            raise ValueError("patterns must be provided before fitting")
        X = check_array(X, ensure_2d=True, dtype=float)
        m = len(self.patterns)
        if X.shape[1] != 2 * m:
            raise ValueError(
                f"X has {X.shape[1]} columns; expected 2*{m} (buckets then complements)"
            )
        bits = pattern_matrix(self.patterns)
        pulse = self.patterns[0].effective_pulse_s
        refs = [reference_pair(p) for p in self.patterns]
        counts = np.array([r.on_time_s / pulse for r in refs])
        self.ensemble_bits_ = np.vstack([bits, 1.0 - bits])
        self.ensemble_counts_ = np.concatenate([counts, bits.shape[1] - counts])
        self.mean_bits_ = self.ensemble_bits_.mean(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "ensemble_bits_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns; fitted for {self.n_features_in_}")
        m2 = self.ensemble_bits_.shape[0]
        ens_d = np.hstack([X[:, : m2 // 2], X[:, m2 // 2 :]])
        mean_d = ens_d.mean(axis=1)
        mean_r = self.ensemble_counts_.mean()
        base = mean_d / mean_r
        corr = (ens_d @ self.ensemble_bits_) / m2
        corr -= np.outer(base, (self.ensemble_counts_ @ self.ensemble_bits_) / m2)
        out = np.where(
            self.mean_bits_ > 0,
            base[:, None] + corr / np.where(self.mean_bits_ > 0, self.mean_bits_, 1.0) ** 2,
            base[:, None],
        )
        return out


class InverseHadamardImager(BaseEstimator, TransformerMixin):
    """Inverse Walsh-Hadamard transform over rows of differential buckets.

    X columns are D - D_inv ordered by Hadamard row index; output rows are
    per-bit images. mode "fast" uses the butterfly, "dense" the explicit
    matrix (kept for cross-checking).
    """

    def __init__(self, mode: str = "fast"):
        self.mode = mode

    def fit(self, X, y=None):
        if self.mode not in ("fast", "dense"):
            raise ValueError(f"unknown mode {self.mode!r}")
        X = check_array(X, ensure_2d=True, dtype=float)
        check_power_of_two_length("n_features", X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns; fitted for {self.n_features_in_}")
        n = self.n_features_in_
        if self.mode == "fast":
            return fast_walsh_hadamard(X, axis=1) / n
        from .patterns import hadamard_matrix

        k = n.bit_length() - 1
        h = hadamard_matrix(k).astype(float)
        return X @ h.T / n
