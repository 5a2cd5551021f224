"""Bootstrap variance estimation for the pairwise coefficient estimate.

Three procedures, trading statistical purity against compute:

* ``bootstrap1`` -- full weighted bootstrap: per replicate, exponential
  weights enter every partial-likelihood fit, every Breslow estimator, and
  the pairwise objective (terms scaled by w_i * w_j), which is re-maximized.
* ``bootstrap2`` -- piggyback: nuisance coefficients are drawn from their
  asymptotic normal laws (inverse information as covariance) instead of
  being refit; weighted Breslows and the weighted pairwise maximization
  remain.
* ``bootstrap3`` -- sandwich-plus-nuisance: no re-maximization at all. The
  plug-in variance is V1^-1 V2 V1^-1 with V1 the pairwise Hessian and V2 the
  pair-score outer-product estimate (optionally on a thinned pair set), plus
  the empirical covariance of Newton quotients computed at replicated
  nuisances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .cox import CoxFit, NuisanceSet, TransitionKind, breslow, fit_nuisance
from .data import Cohort
from .errors import (
    BootstrapError,
    ConvergenceError,
    DegenerateObjectiveError,
    NoEventsError,
    PaircoxError,
    RankDeficiencyError,
    RiskSetError,
)
from .pairwise import PairSchedule, PairwiseObjective, fit_pairwise, maximize

logger = logging.getLogger(__name__)

_REPLICATE_FAILURES = (
    ConvergenceError,
    NoEventsError,
    RiskSetError,
    RankDeficiencyError,
    DegenerateObjectiveError,
)
MAX_DROP_FRACTION = 0.2
MAD_TO_SD = 1.4826
OUTLIER_IQR_FACTOR = 10.0


@dataclass(frozen=True)
class VarianceResult:
    method: str
    covariance: np.ndarray
    se: np.ndarray
    B: int
    replicate_estimates: np.ndarray | None = None
    robust_mad: bool = False
    n_dropped: int = 0
    u_replicates: np.ndarray | None = field(default=None, repr=False)


def robust_se(replicates) -> np.ndarray:
    """Per-coordinate MAD * 1.4826 over replicate rows."""
    replicates = np.asarray(replicates, dtype=float)
    if replicates.ndim == 1:
        replicates = replicates[:, None]
    if replicates.shape[0] < 3:
        raise ValueError("robust_se needs at least 3 replicates")
    med = np.median(replicates, axis=0)
    return MAD_TO_SD * np.median(np.abs(replicates - med), axis=0)


def _spawn(seed, B, replicate_seeds=None):
    """Per-replicate child streams; ``replicate_seeds`` overrides spawning."""
    if replicate_seeds is not None:
        if len(replicate_seeds) != B:
            raise ValueError("replicate_seeds must have length B")
        return list(replicate_seeds)
    return np.random.SeedSequence(seed).spawn(B)


def _pmap(fn, items, n_jobs):
    if n_jobs == 1:
        return [fn(it) for it in items]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(it) for it in items)


class _Box:
    """Mutable holder threading the reusable pair template through a chunk."""

    def __init__(self, value=None):
        self.value = value


def _indexed_chunks(children, n_jobs):
    """Deterministic round-robin chunks of (replicate_index, child_seed)."""
    items = list(enumerate(children))
    k = max(1, min(n_jobs, len(items)))
    return [items[i::k] for i in range(k)]


def _run_batches(replicate_fn, chunk_args_fn, children, n_jobs):
    """Run one replicate function over chunked children; order-restored."""
    chunks = _indexed_chunks(children, n_jobs)

    def batch(chunk):
        box = _Box()
        return [(idx, replicate_fn(chunk_args_fn(child, box))) for idx, child in chunk]

    flat = [pair for out in _pmap(batch, chunks, min(n_jobs, len(chunks)))
            for pair in out]
    flat.sort(key=lambda t: t[0])
    return [r for _, r in flat]


def _collect(results, B, method):
    estimates = [r for r in results if r is not None]
    n_dropped = B - len(estimates)
    if n_dropped:
        logger.warning("%s: dropped %d of %d replicates", method, n_dropped, B)
    if n_dropped > MAX_DROP_FRACTION * B:
        raise BootstrapError(
            f"{method}: {n_dropped}/{B} replicates failed to converge"
        )
    if len(estimates) < 2:
        raise BootstrapError(f"{method}: fewer than 2 usable replicates")
    est = np.vstack(estimates)
    cov = np.cov(est, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return est, cov, n_dropped


def _boot1_replicate(args):
    cohort, schedule, child, censoring_model, unit_weights, box = args
    rng = np.random.default_rng(child)
    w = np.ones(cohort.n) if unit_weights else rng.standard_exponential(cohort.n)
    try:
        nuisance_b, _ = fit_nuisance(cohort, censoring_model, weights=w)
        objective = PairwiseObjective(
            cohort, nuisance_b, schedule, pair_weights=w, template=box.value
        )
        box.value = objective
        fit = maximize(objective, nuisance_b.beta12_pl)
    except _REPLICATE_FAILURES as exc:
        logger.info("bootstrap1 replicate dropped: %s", exc)
        return None
    return fit.beta


def bootstrap1(cohort: Cohort, schedule: PairSchedule, B: int, seed,
               censoring_model: str = "cox", n_jobs: int = 1,
               unit_weights: bool = False, replicate_seeds=None) -> VarianceResult:
    """Full weighted bootstrap (refits nuisances and re-maximizes per replicate)."""
    if B < 2:
        raise ValueError("B must be >= 2")
    results = _run_batches(
        lambda a: _boot1_replicate(a),
        lambda child, box: (cohort, schedule, child, censoring_model,
                            unit_weights, box),
        _spawn(seed, B, replicate_seeds), n_jobs,
    )
    est, cov, n_dropped = _collect(results, B, "bootstrap1")
    return VarianceResult(
        method="boot1", covariance=cov, se=np.sqrt(np.diag(cov)), B=B,
        replicate_estimates=est, n_dropped=n_dropped,
    )


def _normal_factor(cov):
    """Lower factor L with L L' = cov; eigenvalue clipping on failure."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        logger.warning(
            "inverse information not positive definite; clipping eigenvalues at 1e-12"
        )
        vals, vecs = np.linalg.eigh(cov)
        return vecs * np.sqrt(np.clip(vals, 1e-12, None))


def _sampled_nuisance(cohort, fits, censoring_model, factors, rng, w, fixed_betas):
    """Bootstrap-2 steps (ii)-(iii): draw betas, then weighted Breslows at them."""
    betas = {}
    for kind in (TransitionKind.T12, TransitionKind.T13, TransitionKind.T23,
                 TransitionKind.CENS):
        if kind not in fits:
            continue
        point = fits[kind].beta
        if fixed_betas:
            betas[kind] = point
        else:
            betas[kind] = point + factors[kind] @ rng.standard_normal(point.size)
    baselines = {
        kind: breslow(cohort, kind, betas[kind], weights=w) for kind in betas
    }
    cens = censoring_model == "cox"
    return NuisanceSet(
        beta12_pl=betas[TransitionKind.T12],
        beta13=betas[TransitionKind.T13],
        beta23=betas[TransitionKind.T23],
        H012=baselines[TransitionKind.T12],
        H013=baselines[TransitionKind.T13],
        H023=baselines[TransitionKind.T23],
        censoring_model=censoring_model,
        betaC=betas[TransitionKind.CENS] if cens else None,
        H0C=baselines[TransitionKind.CENS] if cens else None,
    )


def _boot2_replicate(args):
    cohort, schedule, child, fits, censoring_model, factors, fixed_betas, box = args
    rng = np.random.default_rng(child)
    w = rng.standard_exponential(cohort.n)
    try:
        nuisance_b = _sampled_nuisance(
            cohort, fits, censoring_model, factors, rng, w, fixed_betas
        )
        objective = PairwiseObjective(
            cohort, nuisance_b, schedule, pair_weights=w, template=box.value
        )
        box.value = objective
        fit = maximize(objective, nuisance_b.beta12_pl)
    except _REPLICATE_FAILURES as exc:
        logger.info("bootstrap2 replicate dropped: %s", exc)
        return None
    return fit.beta


def bootstrap2(cohort: Cohort, fits: dict, schedule: PairSchedule, B: int, seed,
               n_jobs: int = 1, fixed_betas: bool = False,
               replicate_seeds=None) -> VarianceResult:
    """Piggyback bootstrap: nuisance betas sampled from their asymptotic law.

    ``fits`` maps each fitted transition to its point :class:`CoxFit`; the
    inverse information matrices supply the sampling covariances.
    ``fixed_betas`` is a diagnostic mode forcing zero sampling covariance, so
    only the exponential weights vary.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    censoring_model = "cox" if TransitionKind.CENS in fits else "none"
    factors = {kind: _normal_factor(fit.inv_information) for kind, fit in fits.items()}
    results = _run_batches(
        lambda a: _boot2_replicate(a),
        lambda child, box: (cohort, schedule, child, fits, censoring_model,
                            factors, fixed_betas, box),
        _spawn(seed, B, replicate_seeds), n_jobs,
    )
    est, cov, n_dropped = _collect(results, B, "bootstrap2")
    return VarianceResult(
        method="boot2", covariance=cov, se=np.sqrt(np.diag(cov)), B=B,
        replicate_estimates=est, n_dropped=n_dropped,
    )


def pair_score_outer(psi, n, K_n, Ktilde=None) -> np.ndarray:
    """Outer-product variance piece of the subsampled pair score.

    ``psi`` holds one row per scheduled pair, grouped by head observation
    (K_n consecutive rows each, partner offsets in increasing order). With
    ``Ktilde`` only the first Ktilde partners per head enter, with the
    matching coefficient change; ``Ktilde = K_n`` reproduces the full
    estimate identically.
    """
    Kt = K_n if Ktilde is None else int(Ktilde)
    if Kt < 2:
        raise ValueError("Ktilde must be >= 2")
    if Kt > K_n:
        raise ValueError("Ktilde must be <= K_n")
    p = psi.shape[1]
    P = psi.reshape(n, K_n, p)[:, :Kt, :]
    own = np.einsum("nki,nkj->ij", P, P)
    S = P.sum(axis=1)
    cross = S.T @ S - own
    V2 = own / (n * n * K_n * Kt)
    V2 += cross * (2.0 * (2.0 * K_n - 1.0) / (n * n * K_n * Kt * (Kt - 1.0)))
    return (V2 + V2.T) / 2.0


def _newton_quotient(args):
    (cohort, schedule, child, fits, censoring_model, factors, beta12_hat,
     point_nuisance, box) = args
    rng = np.random.default_rng(child)
    w = rng.standard_exponential(cohort.n)
    try:
        if point_nuisance is not None:
            nuisance_b = point_nuisance
        else:
            nuisance_b = _sampled_nuisance(
                cohort, fits, censoring_model, factors, rng, w, fixed_betas=False
            )
        objective = PairwiseObjective(cohort, nuisance_b, schedule,
                                      template=box.value)
        box.value = objective
    except _REPLICATE_FAILURES as exc:
        logger.info("bootstrap3 replicate dropped: %s", exc)
        return None
    score, hess = objective.score_and_hessian(beta12_hat)
    try:
        return np.linalg.solve(hess, score)
    except np.linalg.LinAlgError:
        logger.info("bootstrap3 replicate dropped: singular replicate Hessian")
        return None


def _robust_v3(u) -> np.ndarray:
    """Covariance of Newton quotients with MAD scales, correlations preserved."""
    scale = robust_se(u)
    sd = u.std(axis=0, ddof=1)
    keep = sd > 0
    corr = np.eye(u.shape[1])
    if keep.any():
        sub = np.corrcoef(u[:, keep], rowvar=False)
        corr[np.ix_(keep, keep)] = np.atleast_2d(sub)
    return corr * np.outer(scale, scale)


def bootstrap3(cohort: Cohort, nuisance: NuisanceSet, fits: dict,
               schedule: PairSchedule, beta12_hat, B: int, seed,
               Ktilde: int | None = None, n_jobs: int = 1,
               fixed_nuisance: bool = False) -> VarianceResult:
    """Sandwich variance plus nuisance-perturbation covariance; optimizer-free.

    Requires the point fit ``beta12_hat`` and the point nuisance. ``Ktilde``
    thins the pair set used for the outer-product piece. ``fixed_nuisance``
    is a diagnostic mode that freezes the replicated nuisances at the point
    estimates, reducing the result to the pure sandwich.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    beta12_hat = np.asarray(beta12_hat, dtype=float)
    objective = PairwiseObjective(cohort, nuisance, schedule)
    V1 = objective.hessian(beta12_hat)
    try:
        V1_inv = np.linalg.inv(V1)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("pairwise Hessian is singular") from None
    psi = objective.psi(beta12_hat)
    V2 = pair_score_outer(psi, schedule.n, schedule.K_n, Ktilde)
    sandwich = V1_inv @ V2 @ V1_inv

    censoring_model = nuisance.censoring_model
    factors = {kind: _normal_factor(fit.inv_information) for kind, fit in fits.items()}
    point_nuisance = nuisance if fixed_nuisance else None
    results = _run_batches(
        lambda a: _newton_quotient(a),
        lambda child, box: (cohort, schedule, child, fits, censoring_model,
                            factors, beta12_hat, point_nuisance, box),
        _spawn(seed, B), n_jobs,
    )
    kept = [r for r in results if r is not None]
    n_dropped = B - len(kept)
    if n_dropped > MAX_DROP_FRACTION * B or len(kept) < 3:
        raise BootstrapError(f"bootstrap3: {n_dropped}/{B} replicates failed")
    u = np.vstack(kept)

    med = np.median(u, axis=0)
    iqr = np.subtract(*np.percentile(u, [75, 25], axis=0))
    has_outlier = bool(np.any(np.abs(u - med) > OUTLIER_IQR_FACTOR * iqr))
    if has_outlier:
        logger.warning(
            "bootstrap3: outlier Newton quotients detected; using MAD-based scales"
        )
        V3 = _robust_v3(u)
    else:
        V3 = np.atleast_2d(np.cov(u, rowvar=False, ddof=1))
    cov = sandwich + V3
    return VarianceResult(
        method="boot3", covariance=cov, se=np.sqrt(np.diag(cov)), B=B,
        replicate_estimates=None, robust_mad=has_outlier, n_dropped=n_dropped,
        u_replicates=u,
    )
