"""Weighted Cox partial-likelihood fitting with delayed-entry risk sets.

Four transition fits share one solver. The healthy-state fits (onset,
disease-free death, censoring) use the at-risk window [R, V]; prevalent
subjects (V < R) have an empty window and so never enter the onset fit's
risk sets or event list. The post-onset fit uses the window
[max(R, V), W], restricted to diseased subjects, with observed onset age
appended to the covariate vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Cohort, StepFunction
from .errors import ConvergenceError, NoEventsError, RankDeficiencyError, RiskSetError

logger = logging.getLogger(__name__)

LP_CLIP = 500.0
TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 20


class TransitionKind(Enum):
    T12 = "T12"
    T13 = "T13"
    T23 = "T23"
    CENS = "CENS"


@dataclass(frozen=True)
class CoxFit:
    """Result of one weighted partial-likelihood fit."""

    beta: np.ndarray
    inv_information: np.ndarray
    baseline: StepFunction
    n_events: int
    converged: bool
    iterations: int
    final_grad_norm: float


@dataclass(frozen=True)
class NuisanceSet:
    """Plug-in estimates for everything except the onset coefficients.

    ``beta12_pl`` is the incident-only partial-likelihood estimate used to
    initialize the pairwise fit; ``H012`` is its Breslow baseline. With
    ``censoring_model='none'`` the censoring factors are identically one and
    ``betaC``/``H0C`` are absent.
    """

    beta12_pl: np.ndarray
    beta13: np.ndarray
    beta23: np.ndarray
    H012: StepFunction
    H013: StepFunction
    H023: StepFunction
    censoring_model: str = "cox"
    betaC: np.ndarray | None = None
    H0C: StepFunction | None = None

    def __post_init__(self):
        if len(self.beta23) != len(self.beta13) + 1:
            raise ValueError("beta23 must carry one extra onset-age coefficient")
        if self.censoring_model == "cox":
            if self.betaC is None or self.H0C is None:
                raise ValueError("censoring_model='cox' requires betaC and H0C")
        elif self.censoring_model == "none":
            if self.betaC is not None or self.H0C is not None:
                raise ValueError("censoring_model='none' forbids betaC/H0C")
        else:
            raise ValueError(f"unknown censoring_model {self.censoring_model!r}")


def _design(cohort: Cohort, kind: TransitionKind):
    """Covariates, risk window [entry, exit], event flags for one transition."""
    if kind is TransitionKind.T23:
        X = np.column_stack([cohort.Z, cohort.V])
        entry = np.maximum(cohort.R, cohort.V)
        exit_ = cohort.W
        event = cohort.delta3.astype(bool)
        eligible = (cohort.delta1 == 1) & (entry <= exit_)
        names = tuple(cohort.covariate_names) + ("t1",)
    else:
        X = cohort.Z
        entry = cohort.R
        exit_ = cohort.V
        eligible = entry <= exit_
        if kind is TransitionKind.T12:
            event = (cohort.delta1 == 1) & eligible
        elif kind is TransitionKind.T13:
            event = cohort.delta2 == 1
        elif kind is TransitionKind.CENS:
            event = (cohort.delta1 + cohort.delta2) == 0
        else:
            raise ValueError(f"unknown transition kind {kind!r}")
        names = tuple(cohort.covariate_names)
    event = event & eligible
    return X, entry, exit_, event, eligible, names


class _PLWork:
    """Risk-set sums for one (design, weights) pair, reused across iterations.

    Risk membership at time t is {entry <= t <= exit}; sums over the risk set
    are computed as a suffix sum over exit >= t minus a suffix sum over
    entry > t, which is exact because entry <= exit for every retained row.
    """

    def __init__(self, X, entry, exit_, event, eligible, weights):
        keep = eligible
        self.X = X[keep]
        self.entry = entry[keep]
        self.exit = exit_[keep]
        self.event = event[keep]
        self.w = weights[keep]
        self.p = X.shape[1]
        n = self.X.shape[0]

        self.order_exit = np.argsort(self.exit, kind="stable")
        self.order_entry = np.argsort(self.entry, kind="stable")
        self.exit_sorted = self.exit[self.order_exit]
        self.entry_sorted = self.entry[self.order_entry]

        ev_times = self.exit[self.event]
        ev_w = self.w[self.event]
        self.times, inverse = np.unique(ev_times, return_inverse=True)
        self.d_w = np.bincount(inverse, weights=ev_w, minlength=self.times.size)
        self.idx_exit = np.searchsorted(self.exit_sorted, self.times, side="left")
        self.idx_entry = np.searchsorted(self.entry_sorted, self.times, side="right")

        self.sum_w_event_x = (ev_w[:, None] * self.X[self.event]).sum(axis=0)
        self.xx = (self.X[:, :, None] * self.X[:, None, :]).reshape(n, self.p * self.p)
        self.n_clipped = 0

    def _risk_sums(self, arr):
        """Per event time, sum of arr rows over the risk set (arr is n x q).

        Uses suffix sums over exit >= t minus entry > t; rows where the
        difference cancels catastrophically (risk mass tiny relative to the
        suffix mass, as happens under extreme linear predictors during line
        search) are recomputed by direct masked summation.
        """
        q = arr.shape[1]
        zero = np.zeros((1, q))
        suf_exit = np.concatenate(
            [np.cumsum(arr[self.order_exit][::-1], axis=0)[::-1], zero]
        )
        suf_entry = np.concatenate(
            [np.cumsum(arr[self.order_entry][::-1], axis=0)[::-1], zero]
        )
        out = suf_exit[self.idx_exit] - suf_entry[self.idx_entry]
        if out.size:
            suspect = np.nonzero(out[:, 0] <= 1e-8 * suf_exit[self.idx_exit, 0])[0]
            for k in suspect:
                t = self.times[k]
                mask = (self.entry <= t) & (t <= self.exit)
                out[k] = arr[mask].sum(axis=0)
        return out

    def evaluate(self, beta, need_info=True):
        """Weighted log-PL, score, and (optionally) negative Hessian at beta."""
        lp = self.X @ beta
        clipped = np.abs(lp) > LP_CLIP
        if np.any(clipped):
            self.n_clipped += int(clipped.sum())
            lp = np.clip(lp, -LP_CLIP, LP_CLIP)
        r = self.w * np.exp(lp)

        cols = np.concatenate(
            [r[:, None], r[:, None] * self.X] + ([r[:, None] * self.xx] if need_info else []),
            axis=1,
        )
        sums = self._risk_sums(cols)
        s0 = sums[:, 0]
        if np.any(s0 <= 0):
            t_bad = self.times[int(np.argmax(s0 <= 0))]
            raise RiskSetError(f"empty risk set at event time {t_bad}")
        s1 = sums[:, 1: 1 + self.p]
        zbar = s1 / s0[:, None]

        loglik = float(self.w[self.event] @ lp[self.event] - self.d_w @ np.log(s0))
        score = self.sum_w_event_x - self.d_w @ zbar
        if not need_info:
            return loglik, score, None
        s2 = sums[:, 1 + self.p:].reshape(-1, self.p, self.p)
        info = np.einsum("t,tij->ij", self.d_w, s2 / s0[:, None, None])
        info -= np.einsum("t,ti,tj->ij", self.d_w, zbar, zbar)
        return loglik, score, info

    def baseline_increments(self, beta):
        """Breslow jump sizes d_w(t) / S0_w(beta, t) at each event time."""
        lp = np.clip(self.X @ beta, -LP_CLIP, LP_CLIP)
        r = (self.w * np.exp(lp))[:, None]
        s0 = self._risk_sums(r)[:, 0]
        if np.any(s0 <= 0):
            t_bad = self.times[int(np.argmax(s0 <= 0))]
            raise RiskSetError(f"empty risk set at event time {t_bad}")
        return self.d_w / s0


def _collinear_columns(info, names):
    eigvals, eigvecs = np.linalg.eigh(info)
    tol = max(info.shape[0] * np.abs(eigvals).max(), 1.0) * 1e-12
    cols = set()
    for k in np.nonzero(eigvals < tol)[0]:
        vec = np.abs(eigvecs[:, k])
        cols.update(np.nonzero(vec > 0.1 * vec.max())[0].tolist())
    return [names[c] for c in sorted(cols)]


def _check_weights(weights, n):
    if weights is None:
        return np.ones(n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError(f"weights must have length {n}")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("weights must be non-negative and not all zero")
    return weights


def fit_pl(cohort: Cohort, kind: TransitionKind, weights=None,
           tol: float = TOL, max_iter: int = MAX_ITER) -> CoxFit:
    """Newton-Raphson weighted partial-likelihood fit (Breslow ties).

    Starts at zero, halves the step (up to 20 times) whenever the weighted
    log-PL decreases, and declares convergence when the score's infinity
    norm drops below ``tol``.
    """
    X, entry, exit_, event, eligible, names = _design(cohort, kind)
    weights = _check_weights(weights, cohort.n)
    n_events = int(event.sum())
    if n_events == 0:
        raise NoEventsError(f"no observed events for transition {kind.value}")
    work = _PLWork(X, entry, exit_, event, eligible, weights)

    beta = np.zeros(work.p)
    loglik, score, info = work.evaluate(beta)
    converged = False
    iterations = 0
    for iterations in range(max_iter + 1):
        grad_norm = float(np.abs(score).max())
        if grad_norm < tol:
            converged = True
            break
        if iterations == max_iter:
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            cols = _collinear_columns(info, names)
            raise RankDeficiencyError(
                f"singular information for {kind.value}; collinear columns: {cols}",
                columns=cols,
            ) from None
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step
            cand_ll, cand_score, cand_info = work.evaluate(cand)
            if cand_ll >= loglik - 1e-12 * max(1.0, abs(loglik)):
                beta, loglik, score, info = cand, cand_ll, cand_score, cand_info
                accepted = True
                break
            step = step / 2.0
        if not accepted:
            raise ConvergenceError(
                f"step-halving failed for {kind.value}",
                last_beta=beta, grad_norm=grad_norm, iterations=iterations,
            )
    if not converged:
        raise ConvergenceError(
            f"no convergence for {kind.value} after {max_iter} iterations "
            f"(|grad| = {float(np.abs(score).max()):.3e})",
            last_beta=beta,
            grad_norm=float(np.abs(score).max()),
            iterations=iterations,
        )
    if work.n_clipped:
        logger.warning(
            "%s: clipped %d linear predictors at +/-%g", kind.value, work.n_clipped, LP_CLIP
        )

    information = pl_information(cohort, kind, beta)
    try:
        inv_information = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        logger.warning(
            "%s: information matrix singular at the optimum; using pseudo-inverse",
            kind.value,
        )
        inv_information = np.linalg.pinv(information)
    baseline = StepFunction(work.times, work.baseline_increments(beta))
    return CoxFit(
        beta=beta,
        inv_information=inv_information,
        baseline=baseline,
        n_events=n_events,
        converged=converged,
        iterations=iterations,
        final_grad_norm=float(np.abs(score).max()),
    )


def breslow(cohort: Cohort, kind: TransitionKind, beta, weights=None) -> StepFunction:
    """Weighted Breslow cumulative-baseline estimator for one transition.

    One jump per observed event time, of size (weighted event mass) /
    (weighted risk-set sum of exp(beta'Z)). Returns the zero function when
    the transition has no events.
    """
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    X, entry, exit_, event, eligible, _ = _design(cohort, kind)
    weights = _check_weights(weights, cohort.n)
    if not event.any():
        return StepFunction(np.empty(0), np.empty(0))
    work = _PLWork(X, entry, exit_, event, eligible, weights)
    return StepFunction(work.times, work.baseline_increments(beta))


def pl_information(cohort: Cohort, kind: TransitionKind, beta) -> np.ndarray:
    """Unweighted partial-likelihood information matrix at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    X, entry, exit_, event, eligible, _ = _design(cohort, kind)
    work = _PLWork(X, entry, exit_, event, eligible, np.ones(cohort.n))
    if not event.any():
        return np.zeros((work.p, work.p))
    _, _, info = work.evaluate(beta)
    return info


def fit_nuisance(cohort: Cohort, censoring_model: str = "cox", weights=None):
    """Fit all plug-in transitions and assemble a :class:`NuisanceSet`.

    Returns ``(nuisance, fits)`` where ``fits`` maps each fitted
    :class:`TransitionKind` to its :class:`CoxFit`.
    """
    if censoring_model not in ("cox", "none"):
        raise ValueError(f"unknown censoring_model {censoring_model!r}")
    kinds = [TransitionKind.T12, TransitionKind.T13, TransitionKind.T23]
    if censoring_model == "cox":
        kinds.append(TransitionKind.CENS)
    fits = {kind: fit_pl(cohort, kind, weights=weights) for kind in kinds}
    cens_fit = fits.get(TransitionKind.CENS)
    nuisance = NuisanceSet(
        beta12_pl=fits[TransitionKind.T12].beta,
        beta13=fits[TransitionKind.T13].beta,
        beta23=fits[TransitionKind.T23].beta,
        H012=fits[TransitionKind.T12].baseline,
        H013=fits[TransitionKind.T13].baseline,
        H023=fits[TransitionKind.T23].baseline,
        censoring_model=censoring_model,
        betaC=cens_fit.beta if cens_fit else None,
        H0C=cens_fit.baseline if cens_fit else None,
    )
    return nuisance, fits
