import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostfiber.patterns import (
    BinaryPatternPair,
    format_patterns,
    hadamard_matrix,
    pattern_matrix,
    random_pattern_pairs,
    reference_pair,
    walsh_pattern_pairs,
)


@pytest.mark.parametrize("k", range(1, 9))
def test_hadamard_matches_scipy(k):
    ours = hadamard_matrix(k)
    ref = scipy.linalg.hadamard(2**k)
    assert ours.shape == (2**k, 2**k)
    assert np.array_equal(ours.astype(int), ref.astype(int))


def test_hadamard_orthogonality():
    for k in (1, 3, 6, 10):
        h = hadamard_matrix(k).astype(np.int64)
        n = 2**k
        assert np.array_equal(h @ h.T, n * np.eye(n, dtype=np.int64))


def test_hadamard_order_zero_and_limit():
    assert np.array_equal(hadamard_matrix(0), np.array([[1]], dtype=np.int8))
    with pytest.raises(ValueError):
        hadamard_matrix(17)


def test_walsh_pairs_structure():
    k = 4
    pats = walsh_pattern_pairs(k, 50e-9)
    assert len(pats) == 16
    assert pats[0].bits.sum() == 16  # first Hadamard row is all ones
    for i, p in enumerate(pats):
        assert p.row_index == i
        assert p.family == "walsh"
        assert p.n_bits == 16
        assert np.array_equal(p.bits + p.inverse_bits, np.ones(16, dtype=p.bits.dtype))
        if i > 0:
            assert p.bits.sum() == 8  # balanced rows


def test_walsh_bits_recover_hadamard():
    k = 5
    pats = walsh_pattern_pairs(k, 50e-9)
    h = np.stack([2 * p.bits.astype(int) - 1 for p in pats])
    assert np.array_equal(h, hadamard_matrix(k).astype(int))


def test_pattern_timing_properties():
    p = walsh_pattern_pairs(3, 50e-9, duty_cycle=0.5)[2]
    assert p.duration_s == pytest.approx(8 * 50e-9)
    assert p.effective_pulse_s == pytest.approx(25e-9)


def test_random_pairs_deterministic():
    a = random_pattern_pairs(6, 20, seed=9, bit_duration_s=50e-9)
    b = random_pattern_pairs(6, 20, seed=9, bit_duration_s=50e-9)
    c = random_pattern_pairs(6, 20, seed=10, bit_duration_s=50e-9)
    assert all(np.array_equal(x.bits, y.bits) for x, y in zip(a, b))
    assert any(not np.array_equal(x.bits, y.bits) for x, y in zip(a, c))
    assert all(p.family == "random" for p in a)


def test_random_pairs_roughly_balanced():
    pats = random_pattern_pairs(8, 64, seed=3, bit_duration_s=1e-9)
    density = np.mean([p.bits.mean() for p in pats])
    assert 0.45 < density < 0.55


def test_reference_pair_on_times():
    p = walsh_pattern_pairs(4, 50e-9)[5]
    ref = reference_pair(p)
    slot = 0.5 * 50e-9
    assert ref.on_time_s == pytest.approx(int(p.bits.sum()) * slot)
    assert ref.on_time_s + ref.inverse_on_time_s == pytest.approx(16 * slot)


def test_pattern_matrix_shape_and_mismatch():
    pats = walsh_pattern_pairs(3, 50e-9)
    mat = pattern_matrix(pats)
    assert mat.shape == (8, 8)
    assert mat.dtype == float
    mixed = pats[:2] + walsh_pattern_pairs(2, 50e-9)[:1]
    with pytest.raises(ValueError):
        pattern_matrix(mixed)


def test_pattern_rejects_non_binary():
    with pytest.raises(ValueError):
        BinaryPatternPair(np.array([0, 1, 2, 1]), 50e-9, 0.5, row_index=0)


def test_format_patterns_interleaved_and_blocked():
    pats = walsh_pattern_pairs(2, 50e-9)
    text = format_patterns(pats)
    lines = text.strip().split("\n")
    assert lines[0] == "k=2 dt_ns=50 duty=0.5"
    assert len(lines) == 1 + 8
    assert lines[1] == "1111"
    assert lines[2] == "0000"  # complement immediately follows
    blocked = format_patterns(pats, order="blocked").strip().split("\n")
    assert blocked[1:5] == [lines[i] for i in (1, 3, 5, 7)]
    with pytest.raises(ValueError):
        format_patterns(pats, order="shuffled")


@settings(max_examples=25, deadline=None)
@given(k=st.integers(min_value=1, max_value=6), seed=st.integers(min_value=0, max_value=1000))
def test_complement_identity_property(k, seed):
    pats = random_pattern_pairs(k, 8, seed=seed, bit_duration_s=10e-9)
    for p in pats:
        assert np.array_equal(p.bits + p.inverse_bits, np.ones(2**k, dtype=p.bits.dtype))
        ref = reference_pair(p)
        assert ref.on_time_s + ref.inverse_on_time_s == pytest.approx(
            p.n_bits * p.duty_cycle * p.bit_duration_s
        )


@settings(max_examples=10, deadline=None)
@given(k=st.integers(min_value=1, max_value=7))
def test_walsh_balancedness_property(k):
    pats = walsh_pattern_pairs(k, 10e-9)
    counts = np.array([int(p.bits.sum()) for p in pats])
    assert counts[0] == 2**k
    assert np.all(counts[1:] == 2 ** (k - 1))
