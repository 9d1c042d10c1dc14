"""Point estimators under single imputation.

PMM and NNI impute real donor outcomes; the bias-corrected NNI shifts the
donor outcome by the fitted-mean difference; SRI imputes the fitted mean plus
a respondent residual drawn uniformly with replacement. Every estimator also
records a donor structure so replication can be built from its linear terms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .design import SurveySample, horvitz_thompson
from .errors import NoRespondentsError
from .matching import DonorAssignment, assign_donors, donor_counts, match_on_covariates, match_on_scores
from .meanmodel import FittedModel, MeanModel, fit_mean_model

IDENTITY_RTOL = 1e-12


class Method(str, enum.Enum):
    PMM = "PMM"
    NNI = "NNI"
    NNI_BC = "NNI_BC"
    SRI = "SRI"


@dataclass(frozen=True, eq=False)
class ImputedEstimate:
    method: Method
    mu_hat: float
    assignment: DonorAssignment
    beta_hat: np.ndarray | None = None
    fit: FittedModel | None = None
    extras: dict = field(default_factory=dict, repr=False)


@dataclass(frozen=True, eq=False)
class PseudoValues:
    """psi_i = m_i + delta_i (1 + k_i)(y_i - m_i) and the matching discrepancy.

    ``discrepancy`` is ``sum_j w_j (1 - delta_j)(m_donor(j) - m_j)``; adding it
    to ``HT(psi)`` gives the donor-weighted estimator exactly.
    """

    psi: np.ndarray
    fitted: np.ndarray
    discrepancy: float
    ht: float

    @property
    def estimator(self) -> float:
        return self.ht + self.discrepancy


def _close(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= IDENTITY_RTOL * max(scale, np.finfo(float).tiny)


def _require_respondents(sample: SurveySample):
    if sample.respondents.size == 0:
        raise NoRespondentsError("sample has no respondents")


def donor_forms(sample: SurveySample, assignment: DonorAssignment) -> tuple[float, float]:
    """Return the donor-sum form and the count-weighted form of the estimator.

    The first imputes ``y[donor]`` row by row; the second is
    ``N^-1 sum delta_i (1 + k_i) y_i / pi_i``. They agree algebraically.
    """
    imputed = sample.y_observed.copy()
    imputed[assignment.recipients] = sample.y[assignment.donors]
    donor_sum = horvitz_thompson(sample, imputed)
    count_weighted = horvitz_thompson(sample, sample.delta * (1.0 + assignment.k) * sample.y_observed)
    return donor_sum, count_weighted


def _donor_estimate(sample, assignment, method, fit=None, beta=None, **extras):
    donor_sum, count_weighted = donor_forms(sample, assignment)
    scale = horvitz_thompson(sample, np.abs(sample.delta * (1.0 + assignment.k) * sample.y_observed))
    if not _close(donor_sum, count_weighted, scale):
        raise RuntimeError("donor-sum and count-weighted forms disagree: "
                           f"{donor_sum!r} vs {count_weighted!r}")
    return ImputedEstimate(method=method, mu_hat=donor_sum, assignment=assignment,
                           beta_hat=None if beta is None else np.asarray(beta, dtype=float),
                           fit=fit, extras={"donor_sum": donor_sum, "count_weighted": count_weighted,
                                            **extras})


def pmm_estimate(sample: SurveySample, model: MeanModel, beta=None) -> ImputedEstimate:
    """Predictive mean matching; pass ``beta`` to match on a known mean function."""
    _require_respondents(sample)
    fit = None
    if beta is None:
        fit = fit_mean_model(sample, model)
        beta = fit.beta_hat
    scores = model.mean(sample.x, beta)
    assignment = match_on_scores(sample, scores)
    return _donor_estimate(sample, assignment, Method.PMM, fit=fit, beta=beta,
                           known_beta=fit is None)


def nni_estimate(sample: SurveySample, columns, method: str = "auto") -> ImputedEstimate:
    """Nearest neighbour imputation on covariate ``columns`` (zero-based)."""
    _require_respondents(sample)
    assignment = match_on_covariates(sample, columns, method=method)
    return _donor_estimate(sample, assignment, Method.NNI)


def nni_bias_corrected(sample: SurveySample, model: MeanModel, fit: FittedModel | None = None,
                       method: str = "auto") -> ImputedEstimate:
    """NNI with imputed values ``m(x_j) + y_donor - m(x_donor)``.

    Matching uses the model's covariates; ``m`` is the fitted working model.
    """
    _require_respondents(sample)
    if fit is None:
        fit = fit_mean_model(sample, model)
    assignment = match_on_covariates(sample, model.active, method=method)
    m_hat = model.mean(sample.x, fit.beta_hat)
    imputed = sample.y_observed.copy()
    rec, don = assignment.recipients, assignment.donors
    imputed[rec] = m_hat[rec] + sample.y[don] - m_hat[don]
    mu = horvitz_thompson(sample, imputed)
    return ImputedEstimate(method=Method.NNI_BC, mu_hat=mu, assignment=assignment,
                           beta_hat=fit.beta_hat, fit=fit)


def sri_estimate(sample: SurveySample, model: MeanModel, seed: int) -> ImputedEstimate:
    """Stochastic regression imputation with residuals resampled from respondents.

    The assignment records which respondent's residual each nonrespondent
    received; its ``k`` uses the same design weighting as donor counts (plain
    selection counts under equal probabilities, also kept in
    ``extras["selection_counts"]``).
    """
    _require_respondents(sample)
    fit = fit_mean_model(sample, model)
    m_hat = model.mean(sample.x, fit.beta_hat)
    resp, miss = sample.respondents, sample.nonrespondents
    resid = sample.y[resp] - m_hat[resp]
    g = rng.substream(seed, rng.SRI_RESIDUALS)
    pos = g.integers(0, resp.size, size=miss.size)
    assignment = assign_donors(sample, resp, miss, pos)
    imputed = sample.y_observed.copy()
    imputed[miss] = m_hat[miss] + resid[pos]
    mu = horvitz_thompson(sample, imputed)
    counts = np.bincount(assignment.donors, minlength=sample.n)
    return ImputedEstimate(method=Method.SRI, mu_hat=mu, assignment=assignment,
                           beta_hat=fit.beta_hat, fit=fit,
                           extras={"selection_counts": counts})


def pseudo_values(sample: SurveySample, model: MeanModel, beta,
                  assignment: DonorAssignment) -> PseudoValues:
    """Linearised per-unit contributions under ``beta`` and ``assignment``.

    Raises ``ValueError`` if ``assignment.k`` is not the donor count implied
    by its own recipient/donor pairs, or if the donor-weighted identity
    ``HT(psi) + discrepancy == N^-1 sum delta (1 + k) y / pi`` fails.
    """
    k = assignment.k
    if k.shape != (sample.n,):
        raise ValueError("donor counts must be indexed by sample row")
    if not np.allclose(k, donor_counts(sample, assignment.recipients, assignment.donors),
                       rtol=1e-12, atol=0.0):
        raise ValueError("donor counts do not match the recorded donor pairs")
    if np.any(sample.delta[assignment.donors] != 1) or np.any(sample.delta[assignment.recipients] != 0):
        raise ValueError("donors must be respondents and recipients nonrespondents")
    m = model.mean(sample.x, beta)
    psi = m + sample.delta * (1.0 + k) * (sample.y_observed - m)
    w = sample.weights
    rec, don = assignment.recipients, assignment.donors
    disc = float(np.sum(w[rec] * (m[don] - m[rec])))
    ht = horvitz_thompson(sample, psi)
    count_weighted = horvitz_thompson(sample, sample.delta * (1.0 + k) * sample.y_observed)
    scale = horvitz_thompson(sample, np.abs(psi)) + abs(disc)
    if not _close(ht + disc, count_weighted, scale):
        raise ValueError(f"pseudo-value identity failed: {ht + disc!r} vs {count_weighted!r}")
    return PseudoValues(psi=psi, fitted=m, discrepancy=disc, ht=ht)


def matching_decomposition(sample: SurveySample, model: MeanModel, beta,
                           assignment: DonorAssignment, mu: float) -> tuple[float, float]:
    """Debug helper: ``(D, B)`` with ``D + B == sqrt(n) * (estimate - mu)``.

    ``D`` is the centred pseudo-value term and ``B`` the matching bias term.
    Not an estimator.
    """
    pv = pseudo_values(sample, model, beta, assignment)
    root_n = np.sqrt(sample.n)
    return root_n * (pv.ht - mu), root_n * pv.discrepancy
