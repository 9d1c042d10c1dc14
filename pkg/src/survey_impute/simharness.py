"""Monte Carlo engine for bias, standard error, variance relative bias and coverage.

One finite population (and, for PPS, one set of inclusion probabilities) is
generated per scenario and held fixed; only the samples are redrawn. Rep
``r`` draws its sample and imputation randomness from seeds derived from
``(base_seed, r)``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .design import DesignKind, DesignSpec, compute_pps_probabilities, draw_pps, draw_srs
from .errors import SurveyImputeError
from .imputation import Method
from .meanmodel import MeanModel
from .popgen import PopulationSpec, apply_response_model, generate_population
from .repvar import ReplicationScheme, SchemeKind, estimate

log = logging.getLogger(__name__)

DEFAULT_METHODS = (Method.PMM, Method.NNI, Method.SRI)
MAX_FAILURE_FRACTION = 0.01


@dataclass(frozen=True)
class SimulationConfig:
    population: PopulationSpec
    design: DesignSpec
    methods: tuple = DEFAULT_METHODS
    reps: int = 2000
    base_seed: int = 0
    scheme: SchemeKind = SchemeKind.JACKKNIFE
    bootstrap_replicates: int | None = None
    response: bool = True
    level: float = 0.95
    rematch: bool = False

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))
        if int(self.reps) < 1:
            raise ValueError("need at least one Monte Carlo replication")

    @classmethod
    def from_seed(cls, kind, design, n, pop_size=50_000, reps=2000, seed=0, **kw):
        """Build a config whose population, response and PPS seeds all derive from ``seed``."""
        pop = PopulationSpec(kind, pop_size, rng.derive_seed(seed, rng.POPULATION))
        des = DesignSpec(design, n, seed=0, size_noise_seed=rng.derive_seed(seed, rng.SIZE_NOISE))
        return cls(population=pop, design=des, reps=reps, base_seed=seed, **kw)

    @property
    def scenario(self) -> str:
        return f"{self.population.kind.value}/{self.design.kind.value}"

    @property
    def model(self) -> MeanModel:
        return MeanModel(self.population.kind.active_covariates)


@dataclass(frozen=True)
class MethodSummary:
    bias_e2: float
    se_e2: float
    rb_e2: float
    cr_pct: float
    failures: int = 0


@dataclass(eq=False)
class MethodDraws:
    """Per-rep estimates kept for diagnostics (not serialised)."""

    mu_hat: np.ndarray
    v_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class SimulationResult:
    scenario: str
    M: int
    seed: int
    summaries: dict
    mu: float = float("nan")
    runtime_s: float | None = None
    draws: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, SimulationResult):
            return NotImplemented
        return (self.scenario, self.M, self.seed, self.summaries, self.runtime_s) == (
            other.scenario, other.M, other.seed, other.summaries, other.runtime_s)


def _build_frame(config: SimulationConfig):
    pop = generate_population(config.population)
    if config.response:
        pop = apply_response_model(pop, rng.derive_seed(config.base_seed, rng.RESPONSE))
    pi = None
    if config.design.kind is DesignKind.PPS:
        pi = compute_pps_probabilities(pop, config.design.n, config.design.size_noise_seed)
    return pop, pi


def _one_rep(config: SimulationConfig, pop, pi, r: int):
    sample_seed = rng.derive_seed(config.base_seed, rng.REPLICATION, r, rng.SAMPLE)
    if config.design.kind is DesignKind.SRS:
        sample = draw_srs(pop, config.design.n, sample_seed)
    else:
        sample = draw_pps(pop, pi, sample_seed)
    scheme = ReplicationScheme(config.scheme, config.bootstrap_replicates,
                               seed=rng.derive_seed(config.base_seed, rng.REPLICATION, r, rng.BOOTSTRAP))
    imp_seed = rng.derive_seed(config.base_seed, rng.REPLICATION, r, rng.SRI_RESIDUALS)
    out = []
    for method in config.methods:
        try:
            rep = estimate(sample, config.model, method, scheme, seed=imp_seed,
                           level=config.level, rematch=config.rematch)
            out.append((rep.mu_hat, rep.v_hat, rep.ci[0], rep.ci[1]))
        except SurveyImputeError as exc:
            log.warning("rep %d, %s failed: %s", r, method.value, exc)
            out.append(None)
    return out


_WORKER = {}


def _worker_init(config):
    _WORKER["config"] = config
    _WORKER["frame"] = _build_frame(config)


def _worker_run(reps):
    config = _WORKER["config"]
    pop, pi = _WORKER["frame"]
    return [_one_rep(config, pop, pi, r) for r in reps]


def summarize(mu: float, draws: MethodDraws, failures: int = 0) -> MethodSummary:
    ok = np.isfinite(draws.mu_hat)
    est, v = draws.mu_hat[ok], draws.v_hat[ok]
    bias = 100.0 * float(np.mean(est - mu)) if est.size else math.nan
    if est.size >= 2:
        var_mc = float(np.var(est, ddof=1))
        se = 100.0 * math.sqrt(var_mc)
        rb = 100.0 * (float(np.mean(v)) - var_mc) / var_mc if var_mc > 0 else math.nan
    else:
        se = rb = math.nan
    covered = (draws.lower[ok] <= mu) & (mu <= draws.upper[ok])
    cr = 100.0 * float(np.mean(covered)) if est.size else math.nan
    return MethodSummary(bias_e2=bias, se_e2=se, rb_e2=rb, cr_pct=cr, failures=failures)


def run_monte_carlo(config: SimulationConfig, threads: int = 1) -> SimulationResult:
    t0 = time.perf_counter()
    M = int(config.reps)
    if threads > 1:
        chunks = [list(range(s, min(s + 25, M))) for s in range(0, M, 25)]
        with ProcessPoolExecutor(threads, initializer=_worker_init, initargs=(config,)) as ex:
            rows = [row for part in ex.map(_worker_run, chunks) for row in part]
        pop, _ = _build_frame(config)
    else:
        pop, pi = _build_frame(config)
        rows = [_one_rep(config, pop, pi, r) for r in range(M)]
    mu = pop.mu
    summaries, draws = {}, {}
    for j, method in enumerate(config.methods):
        arr = np.array([row[j] if row[j] is not None else (np.nan,) * 4 for row in rows])
        failures = int(np.sum(~np.isfinite(arr[:, 0])))
        if failures > MAX_FAILURE_FRACTION * M:
            raise SurveyImputeError(f"{config.scenario} {method.value}: {failures} of {M} reps failed")
        d = MethodDraws(mu_hat=arr[:, 0], v_hat=arr[:, 1], lower=arr[:, 2], upper=arr[:, 3])
        draws[method.value] = d
        summaries[method.value] = summarize(mu, d, failures)
    return SimulationResult(scenario=config.scenario, M=M, seed=config.base_seed,
                            summaries=summaries, mu=mu,
                            runtime_s=time.perf_counter() - t0, draws=draws)


# ---------------------------------------------------------------------------
# reporting

_METHOD_ORDER = [m.value for m in Method]


def _fmt(v: float, digits: int) -> str:
    return "NA" if v is None or not math.isfinite(v) else f"{v:.{digits}f}"


def format_table(results) -> str:
    """Plain-text table: Bias and S.E. per method, then RB and CR per method."""
    results = list(results)
    methods = [m for m in _METHOD_ORDER if any(m in r.summaries for r in results)] or \
        [m.value for m in DEFAULT_METHODS]
    head1 = ["Scenario"] + [f"{m} Bias" for m in methods] + [f"{m} S.E." for m in methods] \
        + [f"{m} RB" for m in methods] + [f"{m} CR" for m in methods]
    lines = [head1]
    for r in results:
        row = [r.scenario]
        get = [r.summaries.get(m) for m in methods]
        row += [_fmt(s.bias_e2, 2) if s else "" for s in get]
        row += [_fmt(s.se_e2, 2) if s else "" for s in get]
        row += [_fmt(s.rb_e2, 0) if s else "" for s in get]
        row += [_fmt(s.cr_pct, 1) if s else "" for s in get]
        lines.append(row)
    widths = [max(len(line[i]) for line in lines) for i in range(len(head1))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in lines)


def _num(v):
    return None if v is None or not math.isfinite(v) else float(v)


def to_records(results, timing: bool = False) -> list[dict]:
    records = []
    for r in results:
        for m in _METHOD_ORDER:
            s = r.summaries.get(m)
            if s is None:
                continue
            records.append({
                "scenario": r.scenario, "method": m,
                "bias_e2": _num(s.bias_e2), "se_e2": _num(s.se_e2),
                "rb_e2": _num(s.rb_e2), "cr_pct": _num(s.cr_pct),
                "M": r.M, "seed": r.seed,
                "runtime_s": _num(r.runtime_s) if timing else None,
                "failures": s.failures,
            })
    return records


def dumps(results, timing: bool = False) -> str:
    return json.dumps(to_records(results, timing), indent=2, allow_nan=False) + "\n"


def loads(text: str) -> list[SimulationResult]:
    """Inverse of ``dumps`` (per-rep draws are not serialised)."""
    out: dict = {}
    nan = float("nan")
    for rec in json.loads(text):
        key = (rec["scenario"], rec["M"], rec["seed"])
        res = out.get(key)
        if res is None:
            res = out[key] = SimulationResult(scenario=rec["scenario"], M=rec["M"], seed=rec["seed"],
                                              summaries={}, runtime_s=rec.get("runtime_s"))
        res.summaries[rec["method"]] = MethodSummary(
            *(nan if rec[f] is None else rec[f] for f in ("bias_e2", "se_e2", "rb_e2", "cr_pct")),
            failures=rec.get("failures", 0))
    return list(out.values())
