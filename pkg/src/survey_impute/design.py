"""Sampling designs, inclusion probabilities and the Horvitz-Thompson mean."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import SchemaError
from .popgen import FinitePopulation


class DesignKind(str, enum.Enum):
    SRS = "SRS"
    PPS = "PPS"


@dataclass(frozen=True)
class DesignSpec:
    kind: DesignKind
    n: int
    seed: int = 0
    size_noise_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind if isinstance(self.kind, DesignKind)
                           else DesignKind(str(self.kind).upper()))
        if int(self.n) < 1:
            raise ValueError(f"sample size must be >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True, eq=False)
class SurveySample:
    """Sampled rows with first-order inclusion probabilities.

    ``y`` is only meaningful where ``delta == 1``; it may hold NaN elsewhere.
    """

    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    pi: np.ndarray
    popsize: int

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=np.float64)
        delta = np.asarray(self.delta, dtype=np.int8)
        pi = np.asarray(self.pi, dtype=np.float64)
        n = y.shape[0]
        if not (ids.shape == delta.shape == pi.shape == (n,) and x.shape[0] == n):
            raise SchemaError("sample arrays have inconsistent lengths")
        if not np.all((delta == 0) | (delta == 1)):
            raise SchemaError("delta must be 0/1")
        if not np.all((pi > 0) & (pi <= 1)):
            raise SchemaError("inclusion probabilities must lie in (0, 1]")
        if n > self.popsize:
            raise SchemaError(f"sample size {n} exceeds population size {self.popsize}")
        if np.unique(ids).size != n:
            raise SchemaError("sample ids must be distinct")
        if not np.all(np.isfinite(y[delta == 1])):
            raise SchemaError("respondents must have a finite outcome")
        if not np.all(np.isfinite(x)):
            raise SchemaError("covariates must be finite")
        for name, value in (("ids", ids), ("x", x), ("y", y), ("delta", delta), ("pi", pi)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "popsize", int(self.popsize))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Base weights 1 / (N pi)."""
        return 1.0 / (self.popsize * self.pi)

    @property
    def respondents(self) -> np.ndarray:
        return np.flatnonzero(self.delta == 1)

    @property
    def nonrespondents(self) -> np.ndarray:
        return np.flatnonzero(self.delta == 0)

    @property
    def y_observed(self) -> np.ndarray:
        """Outcomes with nonrespondent entries replaced by 0."""
        return np.where(self.delta == 1, self.y, 0.0)


def _take(pop: FinitePopulation, ids: np.ndarray, pi: np.ndarray) -> SurveySample:
    return SurveySample(ids=ids, x=pop.x[ids], y=pop.y[ids], delta=pop.delta[ids],
                        pi=pi, popsize=pop.size)


def draw_srs(pop: FinitePopulation, n: int, seed: int) -> SurveySample:
    N = pop.size
    if not 1 <= n <= N:
        raise ValueError(f"cannot draw n={n} units from N={N} without replacement")
    g = rng.substream(seed, rng.SAMPLE)
    ids = np.sort(g.choice(N, size=n, replace=False))
    return _take(pop, ids, np.full(n, n / N))


def _cap_at_one(pi: np.ndarray, n: float) -> np.ndarray:
    pi = pi.copy()
    certain = np.zeros(pi.shape, dtype=bool)
    while np.any(pi[~certain] >= 1.0):
        certain |= pi >= 1.0
        pi[certain] = 1.0
        rest = ~certain
        remaining = n - certain.sum()
        if remaining <= 0 or not rest.any():
            break
        pi[rest] *= remaining / pi[rest].sum()
    return pi


def compute_pps_probabilities(pop: FinitePopulation, n: int, seed: int) -> np.ndarray:
    """Inclusion probabilities proportional to ``log(|y + nu| + 4)``, ``nu ~ N(0, 1)``.

    Probabilities that reach 1 are set to 1 and the remainder rescaled so the
    total stays ``n``; a ``RuntimeWarning`` is emitted when that happens.
    """
    if not 1 <= n <= pop.size:
        raise ValueError(f"cannot draw n={n} units from N={pop.size}")
    nu = rng.substream(seed, rng.SIZE_NOISE).standard_normal(pop.size)
    size = np.log(np.abs(pop.y + nu) + 4.0)
    return pps_from_sizes(size, n)


def pps_from_sizes(size: np.ndarray, n: int) -> np.ndarray:
    size = np.asarray(size, dtype=np.float64)
    if np.any(size <= 0) or not np.all(np.isfinite(size)):
        raise ValueError("size measures must be positive and finite")
    pi = n * size / size.sum()
    if np.any(pi >= 1.0):
        warnings.warn("some inclusion probabilities reached 1; capped and renormalised",
                      RuntimeWarning, stacklevel=3)
        pi = _cap_at_one(pi, n)
    return pi


def systematic_pps(pi: np.ndarray, g: np.random.Generator) -> np.ndarray:
    """Systematic PPS over a randomly ordered frame; returns sorted unit ids."""
    pi = np.asarray(pi, dtype=np.float64)
    total = pi.sum()
    n = int(round(total))
    if n < 1 or abs(total - n) > 1e-6 * max(1.0, n):
        raise ValueError(f"inclusion probabilities must sum to an integer, got {total}")
    if np.any(pi <= 0) or np.any(pi > 1.0):
        raise ValueError("inclusion probabilities must lie in (0, 1]")
    order = g.permutation(pi.size)
    cum = np.cumsum(pi[order])
    cum *= n / cum[-1]
    points = g.uniform() + np.arange(n)
    pos = np.searchsorted(cum, points, side="right")
    pos = np.minimum(pos, pi.size - 1)
    ids = np.sort(order[pos])
    if np.unique(ids).size != n:
        # only reachable through rounding on certainty units
        raise ValueError("systematic selection produced a duplicate unit")
    return ids


def draw_pps(pop: FinitePopulation, pi: np.ndarray, seed: int) -> SurveySample:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (pop.size,):
        raise ValueError("need one inclusion probability per population unit")
    ids = systematic_pps(pi, rng.substream(seed, rng.SAMPLE))
    return _take(pop, ids, pi[ids])


def draw_sample(pop: FinitePopulation, spec: DesignSpec, pi: np.ndarray | None = None) -> SurveySample:
    """Draw under ``spec``; PPS probabilities are computed unless supplied."""
    if spec.kind is DesignKind.SRS:
        return draw_srs(pop, spec.n, spec.seed)
    if pi is None:
        pi = compute_pps_probabilities(pop, spec.n, spec.size_noise_seed)
    return draw_pps(pop, pi, spec.seed)


def horvitz_thompson(sample: SurveySample, values) -> float:
    """N^-1 * sum(values / pi) over the sample."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (sample.n,):
        raise ValueError("values must align with sample rows")
    return float(np.sum(values / sample.pi) / sample.popsize)
