"""One-sided Wald tests, BH multiple-testing adjustment, and the
bootstrap test-statistic correlation diagnostic used to sanity-check BH
validity under dependent candidates."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .cox import TransitionKind, fit_nuisance, fit_pl
from .data import Cohort
from .errors import ConvergenceError, NoEventsError, RankDeficiencyError, RiskSetError
from .pairwise import PairSchedule, fit_pairwise
from .variance import _pmap, _spawn, bootstrap2, bootstrap3

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestResult:
    name: str
    estimate: float
    se: float
    z: float
    p_one_sided: float
    p_adjusted: float
    significant: bool


def wald_one_sided(estimate, se) -> float:
    """Upper-tail p-value for H1: effect > 0."""
    if se <= 0:
        raise ValueError("se must be positive")
    return float(norm.sf(estimate / se))


def bh_adjust(pvalues, level: float = 0.05):
    """Step-up adjusted p-values and the rejection set at ``level``.

    Returns ``(adjusted, reject)`` in the input order; adjusted values are
    monotone in the raw ordering and capped at 1.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("pvalues must be a non-empty 1-d array")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adj_sorted
    return adjusted, adjusted <= level


def _corr_replicate(args):
    cohort, candidates, adjust, child = args
    rng = np.random.default_rng(child)
    w = rng.standard_exponential(cohort.n)
    zs = np.empty(len(candidates))
    for k, cand in enumerate(candidates):
        sub = cohort.select_covariates([cand] + list(adjust))
        try:
            fit = fit_pl(sub, TransitionKind.T12, weights=w)
        except (ConvergenceError, NoEventsError, RiskSetError, RankDeficiencyError) as exc:
            logger.info("correlation diagnostic replicate dropped: %s", exc)
            return None
        se = np.sqrt(max(fit.inv_information[0, 0], 0.0))
        zs[k] = fit.beta[0] / se if se > 0 else 0.0
    return zs


def stat_correlation_diag(cohort: Cohort, covariate_list, B: int, seed,
                          adjust=(), n_jobs: int = 1) -> np.ndarray:
    """Empirical correlation of per-candidate Wald statistics across
    exponential-weight bootstrap replicates.

    One incident-onset partial-likelihood model is fit per candidate (with
    the shared adjusters) in every replicate.
    """
    if B < 10:
        raise ValueError("B must be >= 10 for the correlation diagnostic")
    covariate_list = list(covariate_list)
    if not covariate_list:
        raise ValueError("covariate_list must not be empty")
    args = [(cohort, covariate_list, tuple(adjust), child) for child in _spawn(seed, B)]
    rows = [r for r in _pmap(_corr_replicate, args, n_jobs) if r is not None]
    if len(rows) < 3:
        raise ValueError("too few usable replicates for the correlation diagnostic")
    zmat = np.vstack(rows)
    corr = np.corrcoef(zmat, rowvar=False)
    return np.atleast_2d(corr)


def candidate_tests(cohort: Cohort, candidates, adjust, kn: int, B: int,
                    method: str, seed, level: float = 0.05,
                    censoring_model: str = "cox", ktilde=None,
                    n_jobs: int = 1) -> list:
    """Per-candidate pairwise fits with bootstrap SEs and BH adjustment.

    Each candidate gets its own model (candidate plus shared adjusters) and
    its own nuisance set; the BH step-up runs across the candidate p-values.
    """
    if method not in ("boot2", "boot3"):
        raise ValueError("method must be boot2 or boot3")
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate covariates given")
    children = _spawn(seed, len(candidates))

    estimates, ses = [], []
    for cand, child in zip(candidates, children):
        sub = cohort.select_covariates([cand] + list(adjust))
        nuisance, fits = fit_nuisance(sub, censoring_model)
        schedule = PairSchedule(sub.n, kn, shuffle_seed=seed)
        pw = fit_pairwise(sub, nuisance, schedule)
        child_seed = child.generate_state(1)[0]
        if method == "boot2":
            var = bootstrap2(sub, fits, schedule, B, child_seed, n_jobs=n_jobs)
        else:
            var = bootstrap3(
                sub, nuisance, fits, schedule, pw.beta, B, child_seed,
                Ktilde=ktilde, n_jobs=n_jobs,
            )
        estimates.append(float(pw.beta[0]))
        ses.append(float(var.se[0]))

    pvals = np.array([wald_one_sided(e, s) for e, s in zip(estimates, ses)])
    adjusted, reject = bh_adjust(pvals, level)
    return [
        TestResult(
            name=cand,
            estimate=estimates[k],
            se=ses[k],
            z=estimates[k] / ses[k],
            p_one_sided=float(pvals[k]),
            p_adjusted=float(adjusted[k]),
            significant=bool(reject[k]),
        )
        for k, cand in enumerate(candidates)
    ]
