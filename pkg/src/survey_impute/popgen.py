"""Finite populations P1, P2 and P3 and the logistic response model."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng
from .errors import SchemaError

N_COVARIATES = 6
BLOCK_SIZE = 8192


class PopulationKind(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"

    @property
    def active_covariates(self) -> tuple[int, ...]:
        """Zero-based covariate columns used by the working model."""
        if self is PopulationKind.P3:
            return tuple(range(N_COVARIATES))
        return (0, 1)


_KIND_TAG = {PopulationKind.P1: 1, PopulationKind.P2: 2, PopulationKind.P3: 3}


@dataclass(frozen=True)
class PopulationSpec:
    kind: PopulationKind
    size: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "kind", PopulationKind(self.kind))
        if int(self.size) < 1:
            raise ValueError(f"population size must be >= 1, got {self.size}")
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "seed", rng.check_seed(self.seed))

    @property
    def p(self) -> int:
        return len(self.kind.active_covariates)


@dataclass(frozen=True, eq=False)
class FinitePopulation:
    """The N-unit universe ``(x, y, delta)``.

    ``noise`` holds the outcome errors when the population was generated here
    (``None`` after CSV import); ``kind`` likewise.
    """

    x: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    kind: PopulationKind | None = None
    noise: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        delta = np.asarray(self.delta, dtype=np.int8)
        if x.ndim != 2 or x.shape[0] != y.shape[0] or delta.shape != y.shape:
            raise SchemaError("x, y and delta must describe the same units")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise SchemaError("population values must be finite")
        if not np.all((delta == 0) | (delta == 1)):
            raise SchemaError("delta must be 0/1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)

    @property
    def size(self) -> int:
        return self.y.shape[0]

    @property
    def mu(self) -> float:
        return population_mean(self)


def _outcome(kind: PopulationKind, x: np.ndarray, e: np.ndarray) -> np.ndarray:
    x1, x2 = x[:, 0], x[:, 1]
    if kind is PopulationKind.P1:
        return -1.0 + x1 + x2 + e
    if kind is PopulationKind.P2:
        return -1.167 + x1 + x2 + (x1 - 0.5) ** 2 + (x2 - 0.5) ** 2 + e
    return -1.5 + x.sum(axis=1) + e


def generate_population(spec: PopulationSpec) -> FinitePopulation:
    """Draw a finite population; every unit responds until a response model is applied.

    Units are generated in blocks of ``BLOCK_SIZE``, each from its own
    substream ``(POPULATION, kind, block)``, so the output depends only on
    ``spec``.
    """
    kind_tag = _KIND_TAG[spec.kind]
    x = np.empty((spec.size, N_COVARIATES))
    e = np.empty(spec.size)
    for b, start in enumerate(range(0, spec.size, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, spec.size)
        g = rng.substream(spec.seed, rng.POPULATION, kind_tag, b)
        rows = stop - start
        x[start:stop, :3] = g.uniform(size=(rows, 3))
        x[start:stop, 3:] = g.standard_normal(size=(rows, 3))
        e[start:stop] = g.standard_normal(size=rows)
    y = _outcome(spec.kind, x, e)
    return FinitePopulation(x=x, y=y, delta=np.ones(spec.size, dtype=np.int8),
                            kind=spec.kind, noise=e)


def response_probability(x: np.ndarray) -> np.ndarray:
    """expit(0.2 + x1 + x2), evaluated row-wise."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    eta = 0.2 + x[:, 0] + x[:, 1]
    return 1.0 / (1.0 + np.exp(-eta))


def apply_response_model(pop: FinitePopulation, seed: int) -> FinitePopulation:
    p = response_probability(pop.x)
    u = np.empty(pop.size)
    for b, start in enumerate(range(0, pop.size, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, pop.size)
        u[start:stop] = rng.substream(seed, rng.RESPONSE, b).uniform(size=stop - start)
    return replace(pop, delta=(u < p).astype(np.int8))


def population_mean(pop: FinitePopulation) -> float:
    if pop.size == 0:
        raise ValueError("empty population has no mean")
    return float(np.mean(pop.y))


def write_population_csv(pop: FinitePopulation, path) -> None:
    header = [f"x{j + 1}" for j in range(pop.x.shape[1])] + ["y", "delta"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for xi, yi, di in zip(pop.x.tolist(), pop.y.tolist(), pop.delta.tolist()):
            w.writerow([repr(v) for v in xi] + [repr(yi), str(di)])


def read_population_csv(path) -> FinitePopulation:
    with open(Path(path), newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        try:
            iy, idelta = header.index("y"), header.index("delta")
        except ValueError as exc:
            raise SchemaError(f"{path}: header needs y and delta columns") from exc
        rows = list(r)
    x = np.array([[float(row[i]) for i in xcols] for row in rows]).reshape(len(rows), len(xcols))
    y = np.array([float(row[iy]) for row in rows])
    delta = np.array([int(row[idelta]) for row in rows])
    return FinitePopulation(x=x, y=y, delta=delta)
