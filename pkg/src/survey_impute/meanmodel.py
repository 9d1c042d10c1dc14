"""Working mean models and the design-weighted estimating equation.

The estimating equation for the model parameters is

    S(beta) = n^{1/2} * sum_i w_i * delta_i * g(x_i; beta) * (y_i - m(x_i; beta))

with ``w_i = 1 / (N pi_i)`` by default, or any replicate weights. ``g`` is the
model gradient. For the linear model ``m(x; beta) = beta_0 + x_active . beta_1``
the root is weighted least squares on respondents, which is what ``fit_mean_model``
computes directly before polishing with Newton steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import SurveySample
from .errors import ConvergenceError, DegenerateDesignError, ReplicateFailureError

TOLERANCE = 1e-10
MAX_ITER = 50
MAX_CONDITION = 1e12
RIDGE = 1e-8
MAX_FLAGGED_FRACTION = 0.01


@dataclass(frozen=True)
class MeanModel:
    """Linear working model on a subset of covariate columns (zero-based)."""

    active: tuple[int, ...]
    kind: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(int(j) for j in self.active))
        if self.kind != "linear":
            raise ValueError(f"unsupported mean model {self.kind!r}")
        if len(set(self.active)) != len(self.active) or any(j < 0 for j in self.active):
            raise ValueError(f"invalid covariate list {self.active}")

    @property
    def dim(self) -> int:
        return len(self.active) + 1

    def design(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.active and max(self.active) >= x.shape[1]:
            raise ValueError(f"model uses column {max(self.active)} but x has {x.shape[1]}")
        return np.column_stack([np.ones(x.shape[0]), x[:, list(self.active)]])

    def mean(self, x: np.ndarray, beta) -> np.ndarray:
        beta = self._check_beta(beta)
        return self.design(x) @ beta

    def gradient(self, x: np.ndarray, beta) -> np.ndarray:
        """d m / d beta; for the linear model this is the design matrix."""
        self._check_beta(beta)
        return self.design(x)

    def _check_beta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.dim,):
            raise ValueError(f"beta must have length {self.dim}, got shape {beta.shape}")
        return beta


@dataclass(frozen=True, eq=False)
class FittedModel:
    model: MeanModel
    beta_hat: np.ndarray
    score_norm: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.model.mean(x, self.beta_hat)


def predict(model: MeanModel, beta, x_row) -> float:
    x_row = np.asarray(x_row, dtype=np.float64)
    if x_row.ndim != 1:
        raise ValueError("predict takes a single covariate row")
    return float(model.mean(x_row[None, :], beta)[0])


def _weights(sample: SurveySample, weights) -> np.ndarray:
    if weights is None:
        return sample.weights
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (sample.n,):
        raise ValueError("weights must align with sample rows")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    return w


def score(sample: SurveySample, model: MeanModel, beta, weights=None) -> np.ndarray:
    """Normalised estimating function; only respondent rows contribute."""
    beta = model._check_beta(beta)
    w = _weights(sample, weights)
    r = sample.respondents
    resid = sample.y[r] - model.mean(sample.x[r], beta)
    g = model.gradient(sample.x[r], beta)
    return np.sqrt(sample.n) * (g.T @ (w[r] * resid))


def _score_jacobian(sample, model, beta, w):
    r = sample.respondents
    g = model.gradient(sample.x[r], beta)
    # d/d beta of g (y - m) = -g g^T for the linear model
    return -np.sqrt(sample.n) * (g.T * w[r]) @ g


def solve_estimating_equation(score_fn, jacobian_fn, beta0, tol=TOLERANCE, max_iter=MAX_ITER):
    """Guarded Newton iteration with step halving.

    Returns ``(beta, score_norm, iterations, trace)``; raises
    ``ConvergenceError`` (carrying the trace) when ``max_iter`` is exhausted.
    """
    beta = np.asarray(beta0, dtype=np.float64).copy()
    s = score_fn(beta)
    norm = float(np.linalg.norm(s))
    trace = [(0, norm)]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence after {max_iter} iterations (|S|={norm:.3e})", trace)
        it += 1
        try:
            step = np.linalg.solve(jacobian_fn(beta), s)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDesignError("singular Jacobian in Newton step") from exc
        t = 1.0
        for _ in range(30):
            cand = beta - t * step
            s_new = score_fn(cand)
            new_norm = float(np.linalg.norm(s_new))
            if new_norm < norm or new_norm <= tol:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"step halving failed at iteration {it} (|S|={norm:.3e})", trace)
        beta, s, norm = cand, s_new, new_norm
        trace.append((it, norm))
    return beta, norm, it, trace


def fit_mean_model(sample: SurveySample, model: MeanModel, weights=None,
                   tol: float = TOLERANCE, max_iter: int = MAX_ITER) -> FittedModel:
    """Solve the (optionally replicate-weighted) estimating equation."""
    w = _weights(sample, weights)
    r = sample.respondents
    active = r[w[r] > 0]
    if active.size < model.dim:
        raise DegenerateDesignError(
            f"{active.size} weighted respondents cannot identify {model.dim} parameters")
    X = model.design(sample.x[r])
    gram = (X.T * w[r]) @ X
    if np.linalg.cond(gram) > MAX_CONDITION:
        raise DegenerateDesignError("respondent design matrix is singular")
    beta0 = np.linalg.solve(gram, (X.T * w[r]) @ sample.y[r])
    beta, norm, it, trace = solve_estimating_equation(
        lambda b: score(sample, model, b, w),
        lambda b: _score_jacobian(sample, model, b, w),
        beta0, tol=tol, max_iter=max_iter)
    return FittedModel(model=model, beta_hat=beta, score_norm=norm, iterations=it,
                       converged=True, trace=trace)


def fit_replicates(sample: SurveySample, model: MeanModel, weight_matrix: np.ndarray):
    """Weighted least-squares fits for every row of ``weight_matrix`` at once.

    Returns ``(betas, flagged)``. Rows whose normal equations are singular are
    refit with a ridge of ``RIDGE`` times the mean diagonal and flagged. More
    than ``MAX_FLAGGED_FRACTION`` flagged rows raises ``ReplicateFailureError``.
    """
    W = np.asarray(weight_matrix, dtype=np.float64)
    r = sample.respondents
    X = model.design(sample.x[r])
    Wr = W[:, r]
    gram = np.einsum("kr,ri,rj->kij", Wr, X, X)
    rhs = np.einsum("kr,ri,r->ki", Wr, X, sample.y[r])
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(gram)
    flagged = ~(cond <= MAX_CONDITION)
    if flagged.any():
        scale = np.trace(gram[flagged], axis1=1, axis2=2) / model.dim
        gram[flagged] += (RIDGE * np.maximum(scale, 1e-300))[:, None, None] * np.eye(model.dim)
    if flagged.mean() > MAX_FLAGGED_FRACTION:
        raise ReplicateFailureError(
            f"{int(flagged.sum())} of {W.shape[0]} replicate fits were degenerate")
    try:
        betas = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ReplicateFailureError("replicate normal equations could not be solved") from exc
    if not np.all(np.isfinite(betas)):
        raise ReplicateFailureError("replicate fit produced non-finite coefficients")
    return betas, flagged
