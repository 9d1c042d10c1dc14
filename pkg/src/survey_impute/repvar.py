"""Replication variance for imputed means.

Replicates are never produced by re-imputing reweighted data. Each replicate
re-solves the estimating equation under the replicate weights, recomputes the
fitted means and re-weights the linearised contributions

    psi_i = m(x_i; b) + delta_i (1 + k_i) (y_i - m(x_i; b)).

By default the donor counts ``k`` are those of the original imputation for
every method. ``rematch=True`` recomputes PMM donor counts from each
replicate's fitted means instead; under the delete-1 jackknife the O(1/n)
coefficient perturbations then flip O(n) matches, and the n-fold scaling of
the jackknife turns that jitter into a large upward bias, so it is off by
default.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .design import SurveySample
from .imputation import (
    ImputedEstimate,
    Method,
    nni_bias_corrected,
    nni_estimate,
    pmm_estimate,
    pseudo_values,
    sri_estimate,
)
from .matching import DonorAssignment, match_scalar
from .meanmodel import MeanModel, fit_mean_model, fit_replicates

Z_QUANTILES = {0.90: 1.644854, 0.95: 1.959964, 0.99: 2.575829}
DEFAULT_BOOTSTRAP_REPLICATES = 500
BLOCK = 256


class SchemeKind(str, enum.Enum):
    JACKKNIFE = "jackknife"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class ReplicationScheme:
    """Delete-1 jackknife or with-replacement bootstrap replicate weights.

    Jackknife: ``L = n``, ``c_k = (n-1)/n``, unit ``k`` gets weight 0 and the
    rest ``n/(n-1)`` times their base weight. Bootstrap: replicate ``k``
    multiplies base weights by multinomial resample counts drawn from stream
    ``(BOOTSTRAP, k)`` of ``seed``, with ``c_k = n / ((n-1) L)``.
    """

    kind: SchemeKind = SchemeKind.JACKKNIFE
    replicates: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind if isinstance(self.kind, SchemeKind)
                           else SchemeKind(str(self.kind).lower()))
        if self.kind is SchemeKind.BOOTSTRAP and self.replicates is None:
            object.__setattr__(self, "replicates", DEFAULT_BOOTSTRAP_REPLICATES)
        if self.replicates is not None and int(self.replicates) < 1:
            raise ValueError("need at least one replicate")

    def size(self, n: int) -> int:
        return n if self.kind is SchemeKind.JACKKNIFE else int(self.replicates)

    def factors(self, n: int) -> np.ndarray:
        if n < 2:
            raise ValueError("replication needs at least two sampled units")
        L = self.size(n)
        if self.kind is SchemeKind.JACKKNIFE:
            return np.full(L, (n - 1) / n)
        return np.full(L, n / ((n - 1) * L))

    def _multiplicities(self, k: int, n: int) -> np.ndarray:
        g = rng.substream(self.seed, rng.BOOTSTRAP, k)
        return g.multinomial(n, np.full(n, 1.0 / n)).astype(np.float64)

    def weight_block(self, base: np.ndarray, start: int, stop: int) -> np.ndarray:
        n = base.shape[0]
        if self.kind is SchemeKind.JACKKNIFE:
            W = np.tile(base * (n / (n - 1)), (stop - start, 1))
            W[np.arange(stop - start), np.arange(start, stop)] = 0.0
            return W
        return np.stack([base * self._multiplicities(k, n) for k in range(start, stop)])

    def weight_blocks(self, base: np.ndarray, block: int = BLOCK):
        L = self.size(base.shape[0])
        for start in range(0, L, block):
            stop = min(start + block, L)
            yield start, self.weight_block(base, start, stop)

    def weight_for(self, k: int, i: int, base: np.ndarray) -> float:
        return float(self.weight_block(base, k, k + 1)[0, i])


@dataclass(frozen=True, eq=False)
class ReplicateSet:
    values: np.ndarray
    betas: np.ndarray | None
    flagged: int = 0


@dataclass(frozen=True, eq=False)
class EstimateReport:
    method: str
    mu_hat: float
    v_hat: float
    ci: tuple[float, float]
    level: float
    scheme: str
    n_replicates: int
    center: float
    replicates: np.ndarray = field(repr=False)
    replicate_betas: np.ndarray | None = field(default=None, repr=False)
    beta_hat: np.ndarray | None = None
    flagged: int = 0

    def to_dict(self, include_replicates: bool = False) -> dict:
        out = {
            "method": self.method,
            "mu_hat": self.mu_hat,
            "v_hat": self.v_hat,
            "se": float(np.sqrt(self.v_hat)),
            "ci": [self.ci[0], self.ci[1]],
            "level": self.level,
            "scheme": self.scheme,
            "n_replicates": self.n_replicates,
            "replicate_center": self.center,
            "flagged_replicates": self.flagged,
            "beta_hat": None if self.beta_hat is None else [float(b) for b in self.beta_hat],
        }
        if include_replicates:
            out["replicates"] = [float(v) for v in self.replicates]
        return out


def replication_variance(mu_hat: float, replicates, factors) -> float:
    """sum_k c_k (replicate_k - mu_hat)^2."""
    if isinstance(factors, ReplicationScheme):
        raise TypeError("pass scheme.factors(n), not the scheme")
    reps = np.asarray(replicates, dtype=np.float64)
    c = np.asarray(factors, dtype=np.float64)
    if c.shape != reps.shape:
        raise ValueError(f"{reps.size} replicates but {c.size} factors")
    return float(np.sum(c * (reps - mu_hat) ** 2))


def confidence_interval(mu_hat: float, v_hat: float, level: float = 0.95) -> tuple[float, float]:
    if v_hat < 0:
        raise ValueError(f"variance must be non-negative, got {v_hat}")
    try:
        z = Z_QUANTILES[round(level, 6)]
    except KeyError:
        raise ValueError(f"unsupported level {level}; choose from {sorted(Z_QUANTILES)}") from None
    half = z * np.sqrt(v_hat)
    return (mu_hat - half, mu_hat + half)


def _rematched_counts(sample: SurveySample, scores: np.ndarray) -> np.ndarray:
    resp, miss = sample.respondents, sample.nonrespondents
    pos = match_scalar(scores[resp], scores[miss])
    served = np.bincount(resp[pos], weights=1.0 / sample.pi[miss], minlength=sample.n)
    return served * sample.pi


def linear_replicates(sample: SurveySample, model: MeanModel, scheme: ReplicationScheme,
                      k=None, known_beta=None) -> ReplicateSet:
    """Replicates of the linearised estimator.

    ``k`` fixed (array) keeps donor counts from the original imputation;
    ``k=None`` re-matches on each replicate's fitted means (PMM). With
    ``known_beta`` the refit step is skipped and ``k`` must be given.
    """
    X = model.design(sample.x)
    y = sample.y_observed
    delta = sample.delta.astype(np.float64)
    base = sample.weights
    values = np.empty(scheme.size(sample.n))
    betas = None if known_beta is not None else np.empty((values.size, model.dim))
    flagged = 0
    if known_beta is not None:
        if k is None:
            raise ValueError("known-beta replication needs fixed donor counts")
        m = X @ np.asarray(known_beta, dtype=np.float64)
        psi = m + delta * (1.0 + k) * (y - m)
    for start, W in scheme.weight_blocks(base):
        stop = start + W.shape[0]
        if known_beta is not None:
            values[start:stop] = W @ psi
            continue
        B, fl = fit_replicates(sample, model, W)
        flagged += int(fl.sum())
        betas[start:stop] = B
        M = B @ X.T
        if k is None:
            K = np.stack([_rematched_counts(sample, M[r]) for r in range(M.shape[0])])
        else:
            K = np.broadcast_to(np.asarray(k, dtype=np.float64), M.shape)
        values[start:stop] = np.einsum("ri,ri->r", W, M + delta * (1.0 + K) * (y - M))
    return ReplicateSet(values=values, betas=betas, flagged=flagged)


def pmm_replicates(sample, model, scheme, assignment: DonorAssignment | None = None,
                   known_beta=None, rematch: bool = False) -> ReplicateSet:
    """Replicates for PMM.

    ``assignment`` supplies the donor counts held fixed across replicates; it
    may be omitted only with ``rematch=True``.
    """
    if rematch:
        if known_beta is not None:
            raise ValueError("known-beta replicates never re-match")
        return linear_replicates(sample, model, scheme)
    if assignment is None:
        raise ValueError("PMM replicates need the base donor assignment")
    return linear_replicates(sample, model, scheme, k=assignment.k, known_beta=known_beta)


def sri_replicates(sample, model, scheme, base_k) -> ReplicateSet:
    """Replicates for SRI with residual-selection counts held fixed."""
    return linear_replicates(sample, model, scheme, k=np.asarray(base_k, dtype=np.float64))


def run_estimator(sample: SurveySample, model: MeanModel, method, seed: int = 0,
                  known_beta=None, match_method: str = "auto") -> ImputedEstimate:
    method = Method(method)
    if method is Method.PMM:
        return pmm_estimate(sample, model, beta=known_beta)
    if method is Method.NNI:
        return nni_estimate(sample, model.active, method=match_method)
    if method is Method.NNI_BC:
        return nni_bias_corrected(sample, model, method=match_method)
    return sri_estimate(sample, model, seed)


def estimate(sample: SurveySample, model: MeanModel, method, scheme: ReplicationScheme | None = None,
             seed: int = 0, level: float = 0.95, known_beta=None,
             match_method: str = "auto", rematch: bool = False) -> EstimateReport:
    """Point estimate, replication variance and confidence interval.

    The variance is centred on the linearised estimator evaluated at the base
    weights (``HT(psi)``), which is the point the replicates scatter around.
    """
    scheme = scheme or ReplicationScheme()
    method = Method(method)
    est = run_estimator(sample, model, method, seed=seed, known_beta=known_beta,
                        match_method=match_method)
    if known_beta is not None:
        if method is not Method.PMM:
            raise ValueError("known-beta mode is only defined for PMM")
        beta = np.asarray(known_beta, dtype=np.float64)
        reps = pmm_replicates(sample, model, scheme, est.assignment, known_beta=beta)
    else:
        beta = est.beta_hat
        if beta is None:  # plain NNI carries no model fit of its own
            beta = fit_mean_model(sample, model).beta_hat
        if method is Method.PMM:
            reps = pmm_replicates(sample, model, scheme, est.assignment, rematch=rematch)
        else:
            reps = linear_replicates(sample, model, scheme, k=est.assignment.k)
    center = pseudo_values(sample, model, beta, est.assignment).ht
    v = replication_variance(center, reps.values, scheme.factors(sample.n))
    return EstimateReport(method=method.value, mu_hat=est.mu_hat, v_hat=v,
                          ci=confidence_interval(est.mu_hat, v, level), level=level,
                          scheme=scheme.kind.value, n_replicates=reps.values.size,
                          center=center, replicates=reps.values, replicate_betas=reps.betas,
                          beta_hat=beta, flagged=reps.flagged)


def write_replicates_csv(report: EstimateReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        betas = report.replicate_betas
        dim = 0 if betas is None else betas.shape[1]
        w.writerow(["k", "mu_rep"] + [f"beta_rep{j}" for j in range(dim)])
        for k, v in enumerate(report.replicates.tolist()):
            row = [str(k + 1), repr(v)]
            if betas is not None:
                row += [repr(b) for b in betas[k].tolist()]
            w.writerow(row)


@dataclass(frozen=True)
class PluginDiagnostics:
    """Plug-in sample analogues on the sqrt(n) scale (divide by n for var(mu_hat))."""

    v1: float
    vm: float
    ve: float
    gamma1: np.ndarray
    gamma2: np.ndarray
    v_s: np.ndarray
    info: np.ndarray
    v2: float


def plugin_variance_diagnostics(sample: SurveySample, model: MeanModel, beta,
                                assignment: DonorAssignment, sigma2=None) -> PluginDiagnostics:
    """Asymptotic-variance plug-ins for the PMM estimator (diagnostic only).

    ``sigma2`` may be a constant, a callable of the covariate matrix, or
    ``None`` to use the weighted mean squared respondent residual.
    """
    beta = np.asarray(beta, dtype=np.float64)
    n, N = sample.n, sample.popsize
    pi, w = sample.pi, sample.weights
    delta = sample.delta.astype(np.float64)
    m = model.mean(sample.x, beta)
    g = model.gradient(sample.x, beta)
    k = assignment.k
    if sigma2 is None:
        r = sample.respondents
        resid = sample.y[r] - m[r]
        s2 = np.full(n, np.sum(w[r] * resid**2) / np.sum(w[r]))
    elif callable(sigma2):
        s2 = np.broadcast_to(np.asarray(sigma2(sample.x), dtype=np.float64), (n,))
    else:
        s2 = np.full(n, float(sigma2))

    # design-based variance of the HT total of fitted means
    if np.all(pi == pi[0]):
        vm = (1.0 - n / N) * float(np.var(m, ddof=1)) if n > 1 else 0.0
    else:
        z = n * w * m
        vm = float(np.sum((z - z.mean()) ** 2) / (n - 1)) if n > 1 else 0.0

    a = (n / N**2) * (1.0 - pi) / pi**2 * delta
    ve = float(np.sum(a * (1.0 + k) ** 2 * s2))
    gamma1 = (a * (1.0 + k) * s2) @ g
    v_s = (g.T * (a * s2)) @ g
    info = (g.T * (w * delta)) @ g
    gamma2 = w @ g
    v1 = vm + ve
    info_inv = np.linalg.inv(info)
    # pseudo-inverse: V_s vanishes under a census, where the correction is zero
    v2 = (v1 - gamma1 @ np.linalg.lstsq(v_s, gamma1, rcond=None)[0]
          + gamma2 @ info_inv @ v_s @ info_inv @ gamma2)
    return PluginDiagnostics(v1=v1, vm=vm, ve=ve, gamma1=gamma1, gamma2=gamma2,
                             v_s=v_s, info=info, v2=float(v2))
