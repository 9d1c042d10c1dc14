import numpy as np
import pytest
from conftest import make_sample
from hypothesis import given, settings
from hypothesis import strategies as st

from survey_impute.design import SurveySample
from survey_impute.errors import NoRespondentsError
from survey_impute.matching import (
    donor_counts,
    exhaustive_vector,
    match_on_covariates,
    match_on_scores,
    match_scalar,
    match_vector,
)


def brute_scalar(d, r):
    """Plain loops: smallest |d - r|, first index wins ties."""
    out = []
    for rv in r:
        best, best_i = None, None
        for i, dv in enumerate(d):
            dist = abs(dv - rv)
            if best is None or dist < best:
                best, best_i = dist, i
        out.append(best_i)
    return np.array(out)


def brute_vector(d, r):
    out = []
    for rv in r:
        best, best_i = None, None
        for i, dv in enumerate(d):
            dist = 0.0
            for a, b in zip(dv, rv):
                dist += (a - b) ** 2
            if best is None or dist < best:
                best, best_i = dist, i
        out.append(best_i)
    return np.array(out)


def test_hand_example():
    assert match_scalar([1.0, 2.0, 4.0], [2.9]).tolist() == [1]
    assert match_scalar([1.0, 2.0, 4.0], [4.0]).tolist() == [2]


def test_ties_go_to_lowest_index():
    assert match_scalar([3.0, 1.0, 3.0, 1.0], [2.0]).tolist() == [0]
    assert match_scalar([5.0, 1.0, 1.0], [1.0]).tolist() == [1]
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    for method in ("exhaustive", "tree"):
        assert match_vector(pts, [[0.0, 0.0]], method=method).tolist() == [0]


def test_empty_donors():
    with pytest.raises(NoRespondentsError):
        match_scalar([], [1.0])
    with pytest.raises(NoRespondentsError):
        match_vector(np.empty((0, 2)), [[0.0, 0.0]])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        match_vector(np.zeros((3, 2)), np.zeros((2, 3)))


def test_large_random_against_loop_oracle():
    rng = np.random.default_rng(0)
    d, r = rng.normal(size=500), rng.normal(size=200)
    np.testing.assert_array_equal(match_scalar(d, r), brute_scalar(d, r))
    dx, rx = rng.normal(size=(300, 6)), rng.normal(size=(100, 6))
    ref = brute_vector(dx, rx)
    np.testing.assert_array_equal(match_vector(dx, rx, method="tree"), ref)
    np.testing.assert_array_equal(match_vector(dx, rx, method="exhaustive"), ref)


scores = st.lists(st.integers(-20, 20).map(lambda v: v / 4), min_size=1, max_size=60)


@settings(max_examples=200, deadline=None)
@given(scores, scores)
def test_scalar_oracle_with_heavy_ties(d, r):
    np.testing.assert_array_equal(match_scalar(d, r), brute_scalar(d, r))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 80), st.integers(1, 40))
def test_vector_tree_matches_oracle(seed, p, nd, nr):
    rng = np.random.default_rng(seed)
    dx = rng.integers(0, 4, size=(nd, p)).astype(float)  # lattice => many ties
    rx = rng.integers(0, 4, size=(nr, p)).astype(float) + 0.5 * rng.integers(0, 2, size=(nr, p))
    ref = brute_vector(dx, rx)
    np.testing.assert_array_equal(match_vector(dx, rx, method="tree"), ref)
    np.testing.assert_array_equal(exhaustive_vector(dx, rx), ref)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_p1_vector_reduces_to_scalar(seed):
    rng = np.random.default_rng(seed)
    d, r = rng.normal(size=40), rng.normal(size=15)
    np.testing.assert_array_equal(match_vector(d[:, None], r[:, None]), match_scalar(d, r))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-50, 50))
def test_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    d, r = rng.normal(size=30), rng.normal(size=10)
    np.testing.assert_array_equal(match_scalar(a * d + b, a * r + b), match_scalar(d, r))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    d, r = rng.normal(size=30), rng.normal(size=10)
    perm = rng.permutation(30)
    np.testing.assert_array_equal(perm[match_scalar(d[perm], r)], match_scalar(d, r))


def test_donor_count_examples():
    s = SurveySample([0, 1, 2, 3], np.zeros((4, 1)), [1.0, np.nan, np.nan, np.nan], [1, 0, 0, 0],
                     [0.1] * 4, 40)
    np.testing.assert_allclose(donor_counts(s, [1, 2, 3], [0, 0, 0]), [3, 0, 0, 0])
    s2 = SurveySample([0, 1], np.zeros((2, 1)), [1.0, np.nan], [1, 0], [0.1, 0.2], 20)
    assert donor_counts(s2, [1], [0])[0] == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_donor_count_identity(seed, unequal):
    rng = np.random.default_rng(seed)
    s = make_sample(rng, n=50, unequal=unequal)
    for a in (match_on_scores(s, rng.normal(size=s.n)), match_on_covariates(s, [0, 1])):
        lhs = np.sum(s.delta * a.k / s.pi)
        rhs = np.sum((1 - s.delta) / s.pi)
        assert lhs == pytest.approx(rhs, rel=1e-12)
        assert np.all(a.k >= 0) and np.all(a.k[s.nonrespondents] == 0)
        assert set(a.donor_of) == set(s.nonrespondents.tolist())
        assert np.all(s.delta[a.donors] == 1)
