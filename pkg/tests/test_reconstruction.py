import numpy as np
import pytest
from scipy.linalg import hadamard

from ghostfiber.acquisition import (
    AcquisitionPlan,
    AcquisitionRecord,
    bit_grid_response,
    integrate_pattern,
)
from ghostfiber.fiber import FiberProfile, FiberSegment, TemporalImage
from ghostfiber.patterns import pattern_matrix, random_pattern_pairs, walsh_pattern_pairs
from ghostfiber.reconstruction import (
    DifferentialGhostImager,
    InverseHadamardImager,
    ReconstructionResult,
    dgi_reconstruct,
    fast_walsh_hadamard,
    interleave,
    iwht_reconstruct,
    snr_estimate,
    stitch_sections,
)
from ghostfiber.validation import DataError


def synthetic_records(patterns, response, gamma=1.0):
    dt = patterns[0].bit_duration_s
    img = TemporalImage(values=response, delay_start_s=0.0, delay_step_s=dt)
    recs = []
    for p in patterns:
        d, d_inv = integrate_pattern(p, img, gamma=gamma)
        recs.append(AcquisitionRecord(row_index=p.row_index, bucket=d, bucket_inverse=d_inv))
    return recs


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6, 7, 8])
def test_dgi_exact_on_random_response(k):
    rng = np.random.default_rng(k)
    resp = rng.uniform(0.1, 1.0, 2**k)
    pats = walsh_pattern_pairs(k, 50e-9)
    recs = synthetic_records(pats, resp)
    out = dgi_reconstruct(recs, pats)
    assert out.method == "whgi"
    assert np.max(np.abs(out.image.values - resp)) < 1e-12 * np.max(np.abs(resp))


@pytest.mark.parametrize("k", [2, 4, 6])
def test_iwht_exact_on_random_response(k):
    rng = np.random.default_rng(100 + k)
    resp = rng.uniform(0.1, 1.0, 2**k)
    pats = walsh_pattern_pairs(k, 50e-9)
    recs = synthetic_records(pats, resp)
    for mode in ("fast", "dense"):
        out = iwht_reconstruct(recs, pats, transform_mode=mode)
        assert out.method == "iwht"
        assert np.max(np.abs(out.image.values - resp)) < 1e-12


def test_dgi_scales_with_gamma():
    pats = walsh_pattern_pairs(4, 50e-9)
    resp = np.linspace(0.2, 1.0, 16)
    out1 = dgi_reconstruct(synthetic_records(pats, resp, gamma=1.0), pats)
    out3 = dgi_reconstruct(synthetic_records(pats, resp, gamma=3.0), pats)
    assert np.allclose(out3.image.values, 3.0 * out1.image.values, rtol=1e-12)


def test_dgi_linearity():
    pats = walsh_pattern_pairs(5, 50e-9)
    rng = np.random.default_rng(7)
    ra = rng.uniform(0.1, 1.0, 32)
    rb = rng.uniform(0.1, 1.0, 32)
    out_a = dgi_reconstruct(synthetic_records(pats, ra), pats).image.values
    out_b = dgi_reconstruct(synthetic_records(pats, rb), pats).image.values
    out_ab = dgi_reconstruct(synthetic_records(pats, ra + rb), pats).image.values
    assert np.allclose(out_ab, out_a + out_b, rtol=1e-10)


def test_rsgi_recovers_shape():
    n = 64
    resp = 0.5 + 0.4 * np.sin(np.arange(n) / 5.0)
    pats = random_pattern_pairs(6, 4096, seed=3, bit_duration_s=50e-9)
    recs = synthetic_records(pats, resp)
    out = dgi_reconstruct(recs, pats)
    assert out.method == "rsgi"
    r = np.corrcoef(out.image.values, resp)[0, 1]
    assert r > 0.98


def test_fwht_matches_dense_hadamard():
    for k in range(1, 11):
        n = 2**k
        rng = np.random.default_rng(k)
        v = rng.normal(size=n)
        want = hadamard(n) @ v
        got = fast_walsh_hadamard(v)
        assert np.allclose(got, want, atol=1e-12 * n)


def test_fwht_axis_handling():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 8))
    h = hadamard(8)
    assert np.allclose(fast_walsh_hadamard(m, axis=-1), m @ h.T)
    assert np.allclose(fast_walsh_hadamard(m.T, axis=0), h @ m.T)
    with pytest.raises(ValueError, match="power of two"):
        fast_walsh_hadamard(np.ones(6))


def test_iwht_missing_row_and_family():
    pats = walsh_pattern_pairs(3, 50e-9)
    resp = np.ones(8)
    recs = synthetic_records(pats, resp)
    with pytest.raises(DataError, match="missing rows"):
        iwht_reconstruct(recs[:7] + [recs[0]], pats)
    with pytest.raises(ValueError, match="power of two"):
        iwht_reconstruct(recs[:7], pats)
    rand = random_pattern_pairs(3, 8, seed=0, bit_duration_s=50e-9)
    with pytest.raises(DataError, match="Walsh"):
        iwht_reconstruct(synthetic_records(rand, resp), rand)


def test_collect_rejects_duplicates_and_strays():
    pats = walsh_pattern_pairs(3, 50e-9)
    recs = synthetic_records(pats, np.ones(8))
    with pytest.raises(DataError, match="duplicate"):
        dgi_reconstruct(recs, pats + [pats[0]])
    stray = AcquisitionRecord(row_index=99, bucket=1.0, bucket_inverse=1.0)
    with pytest.raises(DataError, match="99"):
        dgi_reconstruct(recs + [stray], pats)
    shifted = [
        AcquisitionRecord(row_index=r.row_index, bucket=r.bucket,
                          bucket_inverse=r.bucket_inverse, shift=i % 2)
        for i, r in enumerate(recs)
    ]
    with pytest.raises(DataError, match="shift"):
        dgi_reconstruct(shifted, pats)


def test_reconstruction_position_axis():
    fiber = FiberProfile(
        segments=(FiberSegment(length_m=500.0, bfs_mhz=10860.0, gain=0.25),),
        pump_w=0.01,
        probe_w=0.001,
    )
    plan = AcquisitionPlan(k=6, bit_duration_s=50e-9, sections=2, shifts=1)
    pats = walsh_pattern_pairs(6, 50e-9)
    resp = bit_grid_response(plan, fiber, 10860.0, section=1)
    recs = synthetic_records(pats, resp.values)
    out = dgi_reconstruct(recs, pats, delay_start_s=plan.section_start_delay_s(1))
    assert out.image.positions_m[0] == pytest.approx(resp.positions_m[0])
    assert out.image.delay_step_s == pytest.approx(50e-9)


def test_interleave_round_trip():
    shifts = 4
    n = 8
    dt = 50e-9
    fine = np.arange(shifts * n, dtype=float)
    results = []
    for q in range(shifts):
        img = TemporalImage(values=fine[q::shifts],
                            delay_start_s=q * dt / shifts,
                            delay_step_s=dt)
        results.append(ReconstructionResult(image=img, method="whgi",
                                            n_measurements=n, shift_index=q))
    merged = interleave(results, shifts)
    assert np.allclose(merged.image.values, fine)
    assert merged.image.delay_step_s == pytest.approx(dt / shifts)
    with pytest.raises(DataError, match="shift"):
        interleave(results[:-1], shifts)
    # ordering does not matter, shift_index does
    shuffled = interleave([results[0], results[2], results[1], results[3]], shifts)
    assert np.allclose(shuffled.image.values, fine)
    bad_start = ReconstructionResult(
        image=TemporalImage(values=fine[1::shifts], delay_start_s=2 * dt / shifts,
                            delay_step_s=dt),
        method="whgi", n_measurements=n, shift_index=1)
    with pytest.raises(DataError, match="starts at"):
        interleave([results[0], bad_start, results[2], results[3]], shifts)


def test_stitch_sections_contiguity():
    dt = 50e-9
    parts = []
    for m in range(3):
        img = TemporalImage(values=np.full(8, float(m)),
                            delay_start_s=m * 8 * dt,
                            delay_step_s=dt)
        parts.append(ReconstructionResult(image=img, method="whgi",
                                          n_measurements=8, section=m))
    whole = stitch_sections(parts)
    assert len(whole.image.values) == 24
    assert whole.seam_indices == (8, 16)
    assert np.allclose(whole.image.values[8:16], 1.0)
    gap = ReconstructionResult(
        image=TemporalImage(values=np.ones(8), delay_start_s=100 * dt, delay_step_s=dt),
        method="whgi", n_measurements=8, section=2)
    with pytest.raises(DataError, match="tile"):
        stitch_sections([parts[0], parts[1], gap])
    with pytest.raises(DataError, match="missing sections"):
        stitch_sections([parts[0], parts[2]])


def test_snr_estimate():
    img = TemporalImage(values=np.concatenate([np.full(50, 10.0), np.full(50, 0.0)]),
                        delay_start_s=0.0, delay_step_s=50e-9)
    lo, hi = img.positions_m[0], img.positions_m[49]
    assert snr_estimate(img, (lo, hi)) == np.inf
    noisy = TemporalImage(values=10.0 + np.random.default_rng(0).normal(0, 1, 100),
                          delay_start_s=0.0, delay_step_s=50e-9)
    got = snr_estimate(noisy, (noisy.positions_m[0], noisy.positions_m[-1]))
    assert 8.0 < got < 13.0
    with pytest.raises(DataError, match="need >= 8"):
        snr_estimate(img, (lo, lo + 1e-9))


def test_dgi_estimator_matches_function():
    pats = walsh_pattern_pairs(5, 50e-9)
    rng = np.random.default_rng(9)
    rows = []
    want = []
    for i in range(3):
        resp = rng.uniform(0.1, 1.0, 32)
        recs = synthetic_records(pats, resp)
        rows.append([r.bucket for r in recs] + [r.bucket_inverse for r in recs])
        want.append(dgi_reconstruct(recs, pats).image.values)
    est = DifferentialGhostImager(patterns=pats)
    got = est.fit_transform(np.array(rows))
    assert got.shape == (3, 32)
    assert np.allclose(got, np.array(want), rtol=1e-12)
    params = est.get_params()
    assert params["patterns"] is pats
    clone = DifferentialGhostImager(**params)
    assert np.allclose(clone.fit_transform(np.array(rows)), got)


def test_hadamard_estimator_matches_function():
    pats = walsh_pattern_pairs(4, 50e-9)
    resp = np.random.default_rng(1).uniform(0.1, 1.0, 16)
    recs = synthetic_records(pats, resp)
    diff = np.array([[r.bucket - r.bucket_inverse for r in recs]])
    for mode in ("fast", "dense"):
        est = InverseHadamardImager(mode=mode)
        got = est.fit_transform(diff)
        want = iwht_reconstruct(recs, pats, transform_mode=mode).image.values
        assert np.allclose(got[0], want, rtol=1e-12)


def test_estimators_validate_input():
    pats = walsh_pattern_pairs(3, 50e-9)
    est = DifferentialGhostImager(patterns=pats)
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        est.transform(np.ones((1, 16)))
    with pytest.raises(ValueError, match="buckets then complements"):
        est.fit(np.ones((2, 10)))
    had = InverseHadamardImager()
    with pytest.raises(ValueError, match="power of two"):
        had.fit(np.ones((2, 6)))
    with pytest.raises(ValueError, match="mode"):
        InverseHadamardImager(mode="nope").fit(np.ones((1, 8)))
