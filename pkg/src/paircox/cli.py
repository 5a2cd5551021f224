"""Command-line surface: reproducible simulate / fit / replicate pipelines.

Every stochastic command requires an explicit --seed; all configuration is
echoed into the JSON report so a run can be reproduced exactly. Exit codes:
0 success, 1 numerical failure (diagnostic JSON still written), 2 usage or
I/O errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .cox import TransitionKind, fit_nuisance
from .data import ingest_csv, minmax_standardize, write_csv, zscore_covariates
from .errors import (
    BootstrapError,
    CohortRowError,
    CohortSchemaError,
    ConvergenceError,
    DegenerateCovariateError,
    DegenerateObjectiveError,
    EmptyCohortError,
    NoEventsError,
    PaircoxError,
    RankDeficiencyError,
    RiskSetError,
)
from .inference import candidate_tests, stat_correlation_diag
from .pairwise import PairSchedule, fit_pairwise
from .simulate import event_counts, gen_cohort, make_scenario, write_truth_csv
from .variance import bootstrap1, bootstrap2, bootstrap3

SCHEMA_VERSION = 1

_NUMERICAL_FAILURES = (
    ConvergenceError,
    BootstrapError,
    RiskSetError,
    RankDeficiencyError,
    NoEventsError,
    DegenerateObjectiveError,
)
_USAGE_FAILURES = (
    CohortSchemaError,
    CohortRowError,
    EmptyCohortError,
    DegenerateCovariateError,
    FileNotFoundError,
    KeyError,
    ValueError,
)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_report(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")


def _base_report(command, config):
    return {
        "schema": SCHEMA_VERSION,
        "command": command,
        "library_version": __version__,
        "config": config,
    }


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="paircox",
        description="Onset-age Cox regression with prevalent cases via "
        "pairwise pseudolikelihood",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a benchmark cohort CSV")
    sim.add_argument("--setting", required=True, choices=["A", "B", "C"])
    sim.add_argument("--n", required=True, type=int)
    sim.add_argument("--seed", required=True, type=int)
    sim.add_argument("--out", required=True)
    sim.add_argument("--truth", default=None,
                     help="optional sidecar CSV of latent pool times")

    fit = sub.add_parser("fit", help="fit nuisances, pairwise coefficients, variance")
    fit.add_argument("--input", required=True)
    fit.add_argument("--kn", required=True, type=int)
    fit.add_argument("--seed", required=True, type=int)
    fit.add_argument("--censoring", default="cox", choices=["cox", "none"])
    fit.add_argument("--variance", default=None, choices=["boot1", "boot2", "boot3"])
    fit.add_argument("--B", type=int, default=100)
    fit.add_argument("--ktilde", type=int, default=None)
    fit.add_argument("--standardize", action="store_true",
                     help="min-max standardize covariates before fitting")
    fit.add_argument("--threads", type=int, default=os.cpu_count())
    fit.add_argument("--out", required=True)

    rep = sub.add_parser("replicate", help="per-candidate tests with BH adjustment")
    rep.add_argument("--input", required=True)
    rep.add_argument("--candidates", required=True,
                     help="comma-separated candidate covariate names")
    rep.add_argument("--adjust", default="",
                     help="comma-separated shared adjustment covariates")
    rep.add_argument("--kn", required=True, type=int)
    rep.add_argument("--B", required=True, type=int)
    rep.add_argument("--method", default="boot2", choices=["boot2", "boot3"])
    rep.add_argument("--ktilde", type=int, default=None)
    rep.add_argument("--level", type=float, default=0.05)
    rep.add_argument("--seed", required=True, type=int)
    rep.add_argument("--censoring", default="cox", choices=["cox", "none"])
    rep.add_argument("--standardize", default="zscore",
                     choices=["zscore", "minmax", "none"])
    rep.add_argument("--correlation-diag", type=int, default=None, metavar="B",
                     help="also emit the bootstrap test-statistic correlation matrix")
    rep.add_argument("--threads", type=int, default=os.cpu_count())
    rep.add_argument("--out", required=True)
    return parser


def _cmd_simulate(args) -> dict:
    spec = make_scenario(args.setting, args.n, args.seed)
    cohort, truth = gen_cohort(spec)
    write_csv(cohort, args.out)
    if args.truth:
        write_truth_csv(truth, args.truth)
    return {"rows": cohort.n, "events": event_counts(cohort), "out": args.out}


def _fit_transitions_payload(fits):
    return {
        kind.value: {
            "beta": fit.beta,
            "n_events": fit.n_events,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "final_grad_norm": fit.final_grad_norm,
        }
        for kind, fit in fits.items()
    }


def _cmd_fit(args) -> dict:
    cohort = ingest_csv(args.input)
    if args.standardize:
        cohort = minmax_standardize(cohort)
    if not 1 <= args.kn <= cohort.n - 1:
        raise ValueError(f"K_n must be <= n-1 (n = {cohort.n})")

    schedule = PairSchedule(cohort.n, args.kn, shuffle_seed=args.seed)
    nuisance, fits = fit_nuisance(cohort, args.censoring)
    pw = fit_pairwise(cohort, nuisance, schedule)

    payload = {
        "n": cohort.n,
        "p": cohort.p,
        "covariates": list(cohort.covariate_names),
        "events": event_counts(cohort),
        "transitions": _fit_transitions_payload(fits),
        "pairwise": {
            "beta": pw.beta,
            "iterations": pw.iterations,
            "final_grad_norm": pw.final_grad_norm,
            "loglik": pw.loglik,
            "invalid_pairs": pw.n_invalid_pairs,
            "n_pairs": pw.n_pairs,
            "kn": args.kn,
        },
    }
    if args.variance:
        if args.variance == "boot1":
            var = bootstrap1(cohort, schedule, args.B, args.seed,
                             censoring_model=args.censoring, n_jobs=args.threads)
        elif args.variance == "boot2":
            var = bootstrap2(cohort, fits, schedule, args.B, args.seed,
                             n_jobs=args.threads)
        else:
            var = bootstrap3(cohort, nuisance, fits, schedule, pw.beta, args.B,
                             args.seed, Ktilde=args.ktilde, n_jobs=args.threads)
        payload["variance"] = {
            "method": var.method,
            "B": var.B,
            "ktilde": args.ktilde,
            "se": var.se,
            "covariance": var.covariance,
            "dropped_replicates": var.n_dropped,
            "robust_mad": var.robust_mad,
        }
    return payload


def _cmd_replicate(args) -> dict:
    cohort = ingest_csv(args.input)
    candidates = [c for c in args.candidates.split(",") if c]
    adjust = [c for c in args.adjust.split(",") if c]
    if not candidates:
        raise ValueError("at least one candidate covariate is required")
    unknown = [c for c in candidates + adjust if c not in cohort.covariate_names]
    if unknown:
        raise KeyError(
            f"unknown covariate name(s) {unknown}; available: "
            f"{list(cohort.covariate_names)}"
        )
    if not 1 <= args.kn <= cohort.n - 1:
        raise ValueError(f"K_n must be <= n-1 (n = {cohort.n})")
    if args.standardize == "zscore":
        cohort = zscore_covariates(cohort, candidates + adjust)
    elif args.standardize == "minmax":
        cohort = minmax_standardize(cohort)

    results = candidate_tests(
        cohort, candidates, adjust, args.kn, args.B, args.method, args.seed,
        level=args.level, censoring_model=args.censoring, ktilde=args.ktilde,
        n_jobs=args.threads,
    )
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("name,estimate,se,z,p_one_sided,p_adjusted,significant\n")
        for r in results:
            fh.write(
                f"{r.name},{r.estimate!r},{r.se!r},{r.z!r},"
                f"{r.p_one_sided!r},{r.p_adjusted!r},{int(r.significant)}\n"
            )
    payload = {
        "n": cohort.n,
        "candidates": candidates,
        "adjust": adjust,
        "results": [dataclasses.asdict(r) for r in results],
        "n_significant": sum(r.significant for r in results),
        "table": csv_path,
    }
    if args.correlation_diag:
        corr = stat_correlation_diag(
            cohort, candidates, args.correlation_diag, args.seed,
            adjust=adjust, n_jobs=args.threads,
        )
        payload["correlation_diag"] = corr
        payload["min_correlation"] = float(corr.min())
    return payload


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in vars(args).items() if k != "command"}
    report = _base_report(args.command, config)
    t0 = time.perf_counter()
    try:
        if args.command == "simulate":
            result = _cmd_simulate(args)
        elif args.command == "fit":
            result = _cmd_fit(args)
        else:
            result = _cmd_replicate(args)
    except _NUMERICAL_FAILURES as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        report["wall_clock_seconds"] = time.perf_counter() - t0
        if args.command != "simulate":
            _write_report(args.out, report)
        print(f"paircox {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    except _USAGE_FAILURES as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"paircox {args.command}: {msg}", file=sys.stderr)
        return 2
    report.update(result)
    report["wall_clock_seconds"] = time.perf_counter() - t0
    if args.command != "simulate":
        _write_report(args.out, report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
