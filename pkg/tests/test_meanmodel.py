import numpy as np
import pytest
from conftest import make_sample
from hypothesis import given, settings
from hypothesis import strategies as st

from survey_impute.design import SurveySample, draw_srs
from survey_impute.errors import ConvergenceError, DegenerateDesignError, ReplicateFailureError
from survey_impute.meanmodel import (
    MeanModel,
    fit_mean_model,
    fit_replicates,
    predict,
    score,
    solve_estimating_equation,
)
from survey_impute.popgen import PopulationSpec, apply_response_model, generate_population

P12 = MeanModel((0, 1))


def naive_score(sample, model, beta):
    """Term-by-term recomputation of the normalised estimating function."""
    out = [0.0] * model.dim
    for i in range(sample.n):
        if sample.delta[i] != 1:
            continue
        g = [1.0] + [sample.x[i, j] for j in model.active]
        m = sum(gi * bi for gi, bi in zip(g, beta))
        for a in range(model.dim):
            out[a] += g[a] * (sample.y[i] - m) / sample.pi[i]
    return np.sqrt(sample.n) / sample.popsize * np.array(out)


def test_predict_examples():
    assert predict(P12, np.zeros(3), [0.3, 0.4]) == 0.0
    assert predict(P12, [1, 2, 3], [0.5, 0.5]) == 3.5
    with pytest.raises(ValueError):
        predict(P12, [1, 2], [0.5, 0.5])


def test_vectorised_predict_matches_rows():
    rng = np.random.default_rng(0)
    x, beta = rng.normal(size=(50, 6)), rng.normal(size=3)
    rows = np.array([predict(P12, beta, r) for r in x])
    np.testing.assert_allclose(P12.mean(x, beta), rows, rtol=1e-14, atol=1e-15)


def test_score_zero_at_exact_fit():
    x = np.random.default_rng(1).uniform(size=(10, 2))
    y = -1 + x.sum(axis=1)
    s = SurveySample(np.arange(10), x, y, np.ones(10), np.full(10, 0.1), 100)
    np.testing.assert_allclose(score(s, P12, [-1, 1, 1]), 0.0, atol=1e-14)


def test_score_single_unit():
    s = SurveySample([0], [[0.2, 0.7]], [3.0], [1], [1.0], 1)
    g = np.array([1.0, 0.2, 0.7])
    beta = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(score(s, P12, beta), g * (3.0 - g @ beta))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_score_matches_naive_loop(seed, unequal):
    rng = np.random.default_rng(seed)
    s = make_sample(rng, n=40, unequal=unequal)
    beta = rng.normal(size=3)
    np.testing.assert_allclose(score(s, P12, beta), naive_score(s, P12, beta), rtol=1e-12, atol=1e-13)


def test_noiseless_fit_exact():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(30, 2))
    s = SurveySample(np.arange(30), x, -1 + x[:, 0] + x[:, 1], np.ones(30), np.full(30, 0.3), 100)
    fit = fit_mean_model(s, P12)
    np.testing.assert_allclose(fit.beta_hat, [-1, 1, 1], atol=1e-10)
    assert fit.converged and fit.score_norm <= 1e-10


def test_fit_matches_lstsq_and_score_tolerance():
    rng = np.random.default_rng(4)
    s = make_sample(rng, n=80, unequal=True)
    fit = fit_mean_model(s, P12)
    r = s.respondents
    sw = np.sqrt(s.weights[r])
    X = np.column_stack([np.ones(r.size), s.x[r]])
    ref, *_ = np.linalg.lstsq(X * sw[:, None], s.y[r] * sw, rcond=None)
    np.testing.assert_allclose(fit.beta_hat, ref, rtol=1e-10)
    assert np.linalg.norm(score(s, P12, fit.beta_hat)) <= 1e-10


def test_scale_invariance_and_nonrespondent_independence():
    rng = np.random.default_rng(5)
    s = make_sample(rng, n=60)
    base = fit_mean_model(s, P12).beta_hat
    scaled = fit_mean_model(s, P12, weights=7.5 * s.weights).beta_hat
    np.testing.assert_allclose(scaled, base, rtol=1e-12)
    y2 = s.y.copy()
    y2[s.nonrespondents] = 1e6
    s2 = SurveySample(s.ids, s.x, y2, s.delta, s.pi, s.popsize)
    assert fit_mean_model(s2, P12).beta_hat.tobytes() == base.tobytes()


def test_replicate_weight_zero_equals_deletion():
    rng = np.random.default_rng(6)
    s = make_sample(rng, n=50)
    k = int(s.respondents[3])
    w = s.weights * s.n / (s.n - 1)
    w[k] = 0.0
    keep = np.arange(s.n) != k
    reduced = SurveySample(s.ids[keep], s.x[keep], s.y[keep], s.delta[keep], s.pi[keep], s.popsize)
    np.testing.assert_allclose(fit_mean_model(s, P12, weights=w).beta_hat,
                               fit_mean_model(reduced, P12).beta_hat, rtol=1e-10)
    betas, flagged = fit_replicates(s, P12, w[None, :])
    np.testing.assert_allclose(betas[0], fit_mean_model(reduced, P12).beta_hat, rtol=1e-10)
    assert not flagged.any()


def test_degenerate_designs():
    x = np.column_stack([np.full(10, 0.5), np.linspace(0, 1, 10)])
    s = SurveySample(np.arange(10), x, np.arange(10.0), np.ones(10), np.full(10, 0.5), 20)
    with pytest.raises(DegenerateDesignError):
        fit_mean_model(s, P12)
    few = SurveySample(np.arange(3), np.eye(3)[:, :2], [1.0, 2.0, np.nan], [1, 1, 0], [0.5] * 3, 6)
    with pytest.raises(DegenerateDesignError):
        fit_mean_model(few, P12)


def test_replicate_flagging_limit():
    x = np.column_stack([np.full(10, 0.5), np.linspace(0, 1, 10)])
    s = SurveySample(np.arange(10), x, np.arange(10.0), np.ones(10), np.full(10, 0.5), 20)
    with pytest.raises(ReplicateFailureError):
        fit_replicates(s, P12, np.tile(s.weights, (5, 1)))


def test_newton_reports_trace():
    with pytest.raises(ConvergenceError) as info:
        # a double root: Newton only halves the iterate each step
        solve_estimating_equation(lambda b: np.array([b[0] ** 2]),
                                  lambda b: np.array([[2 * b[0]]]), [1.0], max_iter=5)
    assert len(info.value.trace) >= 1


def test_newton_solves_nonlinear_equation():
    beta, norm, it, trace = solve_estimating_equation(
        lambda b: np.array([np.exp(b[0]) - 2.0]), lambda b: np.array([[np.exp(b[0])]]), [0.0])
    assert beta[0] == pytest.approx(np.log(2.0), abs=1e-10) and norm <= 1e-10


@pytest.mark.slow
def test_p1_beta_design_consistency():
    """Over repeated samples from one population the fit targets its census fit."""
    pop = apply_response_model(generate_population(PopulationSpec("P1", 50_000, seed=8)), 9)
    r = pop.delta == 1
    census, *_ = np.linalg.lstsq(np.column_stack([np.ones(r.sum()), pop.x[r, :2]]), pop.y[r], rcond=None)
    betas = np.array([fit_mean_model(draw_srs(pop, 400, seed=s), P12).beta_hat for s in range(2000)])
    np.testing.assert_allclose(betas.mean(axis=0), census, atol=0.02)


@pytest.mark.slow
def test_p1_beta_model_consistency():
    """Redrawing the population each time, the fit centres on (-1, 1, 1)."""
    betas = []
    for s in range(500):
        pop = apply_response_model(generate_population(PopulationSpec("P1", 50_000, seed=1000 + s)), s)
        betas.append(fit_mean_model(draw_srs(pop, 400, seed=s), P12).beta_hat)
    np.testing.assert_allclose(np.mean(betas, axis=0), [-1, 1, 1], atol=0.02)
