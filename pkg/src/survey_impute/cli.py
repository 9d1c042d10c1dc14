"""Command-line entry point: ``survey-impute {simulate,impute,generate}``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import csvio, rng
from .design import DesignKind, compute_pps_probabilities, draw_pps, draw_srs
from .errors import SurveyImputeError
from .imputation import Method, pmm_estimate
from .meanmodel import MeanModel
from .popgen import PopulationSpec, apply_response_model, generate_population, write_population_csv
from .repvar import ReplicationScheme, estimate, plugin_variance_diagnostics, write_replicates_csv
from .simharness import SimulationConfig, dumps, format_table, run_monte_carlo

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _methods(text: str) -> tuple[Method, ...]:
    if text.lower() == "all":
        return tuple(Method)
    try:
        return tuple(Method(t.strip().upper()) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _covariates(text: str) -> tuple[int, ...]:
    cols = []
    for tok in text.split(","):
        tok = tok.strip()
        if not (tok.startswith("x") and tok[1:].isdigit() and int(tok[1:]) >= 1):
            raise argparse.ArgumentTypeError(f"bad covariate name {tok!r}; use x1,x2,...")
        cols.append(int(tok[1:]) - 1)
    return tuple(cols)


def _seed(text: str) -> int:
    try:
        return rng.check_seed(int(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SURVEY_IMPUTE_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="survey-impute", description="Design-weighted imputation and replication variance.")
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    def variance_flags(sp):
        sp.add_argument("--variance", choices=["jackknife", "bootstrap"], default="jackknife")
        sp.add_argument("--replicates", type=int, default=None,
                        help="bootstrap replicate count (default 500)")
        sp.add_argument("--rematch", action="store_true",
                        help="re-match PMM donors inside every replicate")
        sp.add_argument("--seed", type=_seed, default=0)

    s = sub.add_parser("simulate", help="Monte Carlo study over a generated population")
    s.add_argument("--population", choices=["P1", "P2", "P3"], required=True)
    s.add_argument("--design", type=str.upper, choices=["SRS", "PPS"], required=True)
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--pop-size", type=int, default=50_000)
    s.add_argument("--reps", type=int, default=2000)
    s.add_argument("--method", type=_methods, default=(Method.PMM, Method.NNI, Method.SRI))
    s.add_argument("--output", help="result JSON path (default: standard output)")
    s.add_argument("--threads", type=int, default=_default_threads())
    s.add_argument("--timing", action="store_true", help="record runtime_s in the result JSON")
    variance_flags(s)

    i = sub.add_parser("impute", help="estimate a mean from a sample CSV")
    i.add_argument("--input", required=True)
    i.add_argument("--method", type=str.upper, choices=[m.value for m in Method], default="PMM")
    i.add_argument("--model", type=_covariates, required=True, help="covariates, e.g. x1,x2")
    i.add_argument("--pop-size", type=int, default=None)
    i.add_argument("--level", type=float, default=0.95)
    i.add_argument("--output", help="report JSON path (default: standard output)")
    i.add_argument("--replicates-out", help="write replicate estimates to this CSV")
    variance_flags(i)

    g = sub.add_parser("generate", help="write a population CSV and optionally a sample CSV")
    g.add_argument("--population", choices=["P1", "P2", "P3"], required=True)
    g.add_argument("--pop-size", type=int, default=50_000)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--output", required=True)
    g.add_argument("--design", type=str.upper, choices=["SRS", "PPS"], default=None)
    g.add_argument("--n", type=int, default=400)
    g.add_argument("--sample-output", default=None)
    return p


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scheme(args, seed_key: int) -> ReplicationScheme:
    if args.variance == "jackknife" and args.replicates is not None:
        raise UsageError("--replicates applies to --variance bootstrap only")
    return ReplicationScheme(args.variance, args.replicates, seed=rng.derive_seed(args.seed, seed_key))


def cmd_simulate(args) -> int:
    if args.reps < 1 or args.n < 1 or args.pop_size < args.n:
        raise UsageError("need reps >= 1 and 1 <= n <= pop-size")
    if args.variance == "jackknife" and args.replicates is not None:
        raise UsageError("--replicates applies to --variance bootstrap only")
    config = SimulationConfig.from_seed(args.population, args.design, args.n, pop_size=args.pop_size,
                                        reps=args.reps, seed=args.seed, methods=args.method,
                                        scheme=args.variance, bootstrap_replicates=args.replicates,
                                        rematch=args.rematch)
    result = run_monte_carlo(config, threads=max(1, args.threads))
    sys.stdout.write(format_table([result]) + "\n")
    _write(dumps([result], timing=args.timing), args.output)
    return EXIT_OK


def cmd_impute(args) -> int:
    sample = csvio.ingest_csv(args.input, popsize=args.pop_size)
    model = MeanModel(args.model)
    if max(model.active) >= sample.x.shape[1]:
        raise UsageError(f"model uses x{max(model.active) + 1} but the input has "
                         f"{sample.x.shape[1]} covariates")
    scheme = _scheme(args, rng.BOOTSTRAP)
    report = estimate(sample, model, args.method, scheme, level=args.level,
                      seed=rng.derive_seed(args.seed, rng.SRI_RESIDUALS), rematch=args.rematch)
    out = report.to_dict()
    out.update(n=sample.n, N=sample.popsize, respondents=int(sample.respondents.size),
               covariates=[f"x{j + 1}" for j in model.active])
    if args.method == Method.PMM.value:
        est = pmm_estimate(sample, model)
        diag = plugin_variance_diagnostics(sample, model, est.beta_hat, est.assignment)
        out["diagnostics"] = {"v1_plugin": diag.v1 / sample.n, "vm_plugin": diag.vm / sample.n,
                              "ve_plugin": diag.ve / sample.n, "v2_plugin": diag.v2 / sample.n}
    if args.replicates_out:
        write_replicates_csv(report, args.replicates_out)
    _write(json.dumps(out, indent=2, allow_nan=False) + "\n", args.output)
    return EXIT_OK


def cmd_generate(args) -> int:
    pop = generate_population(PopulationSpec(args.population, args.pop_size,
                                             rng.derive_seed(args.seed, rng.POPULATION)))
    pop = apply_response_model(pop, rng.derive_seed(args.seed, rng.RESPONSE))
    write_population_csv(pop, args.output)
    if args.sample_output:
        if args.design is None:
            raise UsageError("--sample-output needs --design")
        sample_seed = rng.derive_seed(args.seed, rng.SAMPLE)
        if DesignKind(args.design) is DesignKind.SRS:
            sample = draw_srs(pop, args.n, sample_seed)
        else:
            pi = compute_pps_probabilities(pop, args.n, rng.derive_seed(args.seed, rng.SIZE_NOISE))
            sample = draw_pps(pop, pi, sample_seed)
        csvio.write_sample_csv(sample, args.sample_output)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"simulate": cmd_simulate, "impute": cmd_impute, "generate": cmd_generate}[args.mode]
    try:
        return handler(args)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except (SurveyImputeError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
