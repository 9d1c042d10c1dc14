import numpy as np
import pytest

from survey_impute import rng
from survey_impute.design import (
    DesignSpec,
    SurveySample,
    compute_pps_probabilities,
    draw_pps,
    draw_sample,
    draw_srs,
    horvitz_thompson,
    pps_from_sizes,
    systematic_pps,
)
from survey_impute.errors import SchemaError
from survey_impute.popgen import FinitePopulation, PopulationSpec, generate_population


def tiny_population(N=100, seed=0):
    g = np.random.default_rng(seed)
    return FinitePopulation(x=g.uniform(size=(N, 6)), y=g.normal(size=N), delta=np.ones(N))


def test_census_srs():
    pop = tiny_population(30)
    s = draw_srs(pop, 30, seed=1)
    np.testing.assert_array_equal(s.ids, np.arange(30))
    assert np.all(s.pi == 1.0)
    assert horvitz_thompson(s, s.y) == pytest.approx(pop.mu, rel=1e-14)


def test_srs_probabilities_table_setting(p1_population):
    pop = generate_population(PopulationSpec("P1", 50_000, seed=1))
    s = draw_srs(pop, 400, seed=2)
    assert np.all(s.pi == 0.008)
    assert s.n == 400 and np.unique(s.ids).size == 400


def test_srs_rejects_oversize():
    with pytest.raises(ValueError):
        draw_srs(tiny_population(10), 11, seed=1)


def _inclusion_frequencies(draw, N, reps):
    counts = np.zeros(N)
    for r in range(reps):
        counts[draw(r)] += 1
    return counts / reps


@pytest.mark.slow
def test_srs_inclusion_frequencies():
    pop = tiny_population(100)
    freq = _inclusion_frequencies(lambda r: draw_srs(pop, 10, seed=r).ids, 100, 10_000)
    sigma = np.sqrt(0.1 * 0.9 / 10_000)
    assert np.all(np.abs(freq - 0.1) <= 4 * sigma)
    assert np.mean(np.abs(freq - 0.1) <= 3 * sigma) >= 0.98


@pytest.mark.slow
def test_pps_inclusion_frequencies():
    g = np.random.default_rng(3)
    pi = pps_from_sizes(g.uniform(0.5, 3.0, size=100), 10)
    assert pi.sum() == pytest.approx(10.0)
    pop = tiny_population(100)
    freq = _inclusion_frequencies(lambda r: draw_pps(pop, pi, seed=r).ids, 100, 10_000)
    sigma = np.sqrt(pi * (1 - pi) / 10_000)
    assert np.all(np.abs(freq - pi) <= 4 * sigma)
    assert np.mean(np.abs(freq - pi) <= 3 * sigma) >= 0.98


def test_pps_fixed_size_and_certainty_unit():
    pi = np.full(50, 4.0 / 49)
    pi[7] = 1.0
    pi[:7] = pi[8:].mean()
    pi *= 5 / pi.sum()
    pi[7] = 1.0
    rest = np.arange(50) != 7
    pi[rest] *= 4 / pi[rest].sum()
    pop = tiny_population(50)
    for r in range(500):
        s = draw_pps(pop, pi, seed=r)
        assert s.n == 5
        assert 7 in s.ids


def test_pps_equal_sizes_reduce_to_srs_probabilities():
    pi = pps_from_sizes(np.full(200, np.log(4.0)), 20)
    np.testing.assert_allclose(pi, 0.1, rtol=1e-14)


def test_pps_zero_outcome_and_noise_gives_equal_probabilities():
    pop = FinitePopulation(x=np.zeros((40, 6)), y=np.zeros(40), delta=np.ones(40))
    sizes = np.log(np.abs(pop.y + 0.0) + 4.0)
    np.testing.assert_allclose(pps_from_sizes(sizes, 8), 8 / 40)


def test_pps_probabilities_stay_below_one_for_table_setting():
    for kind in ("P1", "P2", "P3"):
        pop = generate_population(PopulationSpec(kind, 50_000, seed=5))
        pi = compute_pps_probabilities(pop, 400, seed=6)
        assert pi.max() < 1.0
        assert pi.sum() == pytest.approx(400.0)
        # informative: size grows with |y|
        assert np.corrcoef(pi, np.abs(pop.y))[0, 1] > 0.1


def test_pps_capping_warns_and_preserves_total():
    sizes = np.array([100.0] + [1.0] * 20)
    with pytest.warns(RuntimeWarning):
        pi = pps_from_sizes(sizes, 5)
    assert pi[0] == 1.0
    assert pi.sum() == pytest.approx(5.0)
    assert np.all(pi <= 1.0)


def test_systematic_rejects_non_integer_total():
    with pytest.raises(ValueError):
        systematic_pps(np.full(10, 0.25), np.random.default_rng(0))


def test_ht_srs_equals_sample_mean(p1_sample):
    v = p1_sample.x[:, 0]
    assert horvitz_thompson(p1_sample, v) == pytest.approx(v.mean(), rel=1e-12)


def test_ht_alignment_error(p1_sample):
    with pytest.raises(ValueError):
        horvitz_thompson(p1_sample, np.ones(3))


@pytest.mark.slow
@pytest.mark.parametrize("design", ["SRS", "PPS"])
def test_ht_design_unbiased(design):
    pop = generate_population(PopulationSpec("P1", 20_000, seed=31))
    pi = compute_pps_probabilities(pop, 400, 32) if design == "PPS" else None
    est = []
    for r in range(1000):
        s = draw_sample(pop, DesignSpec(design, 400, seed=rng.derive_seed(33, r),
                                        size_noise_seed=32), pi=pi)
        est.append(horvitz_thompson(s, s.y))
    est = np.array(est)
    assert abs(est.mean() - pop.mu) <= 4 * est.std(ddof=1) / np.sqrt(est.size)


@pytest.mark.slow
def test_ht_p1_srs_bias_small():
    pop = generate_population(PopulationSpec("P1", 50_000, seed=41))
    est = np.array([horvitz_thompson(s, s.y) for s in
                    (draw_srs(pop, 400, seed=r) for r in range(2000))])
    assert abs(est.mean() - pop.mu) <= 0.5e-2


def test_sample_invariants(p1_sample):
    np.testing.assert_allclose(p1_sample.weights * p1_sample.popsize * p1_sample.pi, 1.0)
    with pytest.raises(SchemaError):
        SurveySample(ids=[0, 0], x=np.zeros((2, 1)), y=[1, 2], delta=[1, 1], pi=[0.5, 0.5], popsize=4)
    with pytest.raises(SchemaError):
        SurveySample(ids=[0, 1], x=np.zeros((2, 1)), y=[1, 2], delta=[1, 1], pi=[0.0, 0.5], popsize=4)
    with pytest.raises(SchemaError):
        SurveySample(ids=[0, 1], x=np.zeros((2, 1)), y=[np.nan, 2], delta=[1, 1], pi=[0.5, 0.5], popsize=4)
