"""Pairwise pseudolikelihood estimation of the onset-model coefficients.

Each ordered pair (i, j) contributes -ln(1 + zeta_ij * eta_ij) where eta
carries the onset coefficients and baseline, and zeta collects the plug-in
factors from the other transitions and censoring. Swapping outcomes within
a pair can produce a quasi-observation that is dead or censored before its
recruitment age without disease; such invalid pairs have zeta = 0 and
contribute exactly ln(1) = 0.

Rather than all n-choose-2 pairs, each observation is paired with its next
K_n successors modulo n (after one seeded shuffle of the row order), giving
n*K_n ordered terms. With K_n = n-1 every unordered pair appears exactly
twice and the subsampled objective coincides with the all-pairs one.

All pair arithmetic is done in log space with softplus/sigmoid so large
linear predictors cannot overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .cox import LP_CLIP, NuisanceSet
from .data import Cohort
from .errors import ConvergenceError, DegenerateObjectiveError

MAX_HALVINGS = 20


class _CallCounter:
    """Counts pairwise maximizations; lets tests assert an op ran optimizer-free."""

    def __init__(self):
        self.count = 0

    def bump(self):
        self.count += 1

    def reset(self):
        self.count = 0


optimizer_calls = _CallCounter()


@dataclass(frozen=True)
class PairSchedule:
    """Modulo-n pairing plan: observation i is paired with the K_n rows after it.

    ``shuffle_seed`` shuffles the row order once before pairing, realizing the
    random-ordering assumption deterministically; None keeps the input order.
    """

    n: int
    K_n: int
    shuffle_seed: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("schedule needs at least two observations")
        if not 1 <= self.K_n <= self.n - 1:
            raise ValueError("K_n must be between 1 and n-1")

    def order(self) -> np.ndarray:
        if self.shuffle_seed is None:
            return np.arange(self.n)
        return np.random.default_rng(self.shuffle_seed).permutation(self.n)

    def indices(self):
        """Ordered pair index arrays (i, j), each of length n * K_n."""
        order = self.order()
        pos_i = np.repeat(np.arange(self.n), self.K_n)
        pos_j = (pos_i + np.tile(np.arange(1, self.K_n + 1), self.n)) % self.n
        return order[pos_i], order[pos_j]


@dataclass(frozen=True)
class PairTerm:
    """Diagnostic record for one ordered pair."""

    i: int
    j: int
    log_zeta: float
    valid: bool


@dataclass(frozen=True)
class PairwiseFit:
    beta: np.ndarray
    converged: bool
    iterations: int
    final_grad_norm: float
    loglik: float
    n_invalid_pairs: int
    n_pairs: int


def _pair_valid(obs_i, obs_j) -> bool:
    return (obs_i.R < obs_j.V or obs_j.delta1 == 1) and (
        obs_j.R < obs_i.V or obs_i.delta1 == 1
    )


def log_eta(beta12, H012, obs_i, obs_j) -> float:
    g_i = float(np.dot(beta12, obs_i.Z))
    g_j = float(np.dot(beta12, obs_j.Z))
    return (g_i - g_j) * (obs_j.delta1 - obs_i.delta1) + (
        float(H012(obs_i.V)) - float(H012(obs_j.V))
    ) * (math.exp(g_i) - math.exp(g_j))


def eta(beta12, H012, obs_i, obs_j) -> float:
    """Pair factor carrying the onset coefficients (computed in log space)."""
    return math.exp(log_eta(beta12, H012, obs_i, obs_j))


def log_zeta(nuisance: NuisanceSet, obs_i, obs_j) -> float:
    """Log of the plug-in pair factor; -inf marks an invalid pair.

    Scalar reference implementation mirroring the explicit product form; the
    vectorized path in :class:`PairwiseObjective` is tested against it.
    """
    if not _pair_valid(obs_i, obs_j):
        return float("-inf")

    lp13_i = float(np.dot(nuisance.beta13, obs_i.Z))
    lp13_j = float(np.dot(nuisance.beta13, obs_j.Z))
    H013 = nuisance.H013
    out = (lp13_i - lp13_j) * (obs_j.delta2 - obs_i.delta2)
    out += (float(H013(obs_i.V)) - float(H013(obs_j.V))) * (
        math.exp(lp13_i) - math.exp(lp13_j)
    )

    b23 = nuisance.beta23
    H023 = nuisance.H023
    lp23_i = float(np.dot(b23[:-1], obs_i.Z))
    lp23_j = float(np.dot(b23[:-1], obs_j.Z))
    c23 = float(b23[-1])
    if obs_i.R > obs_j.V:
        out += (float(H023(obs_j.V)) - float(H023(obs_i.R))) * math.exp(
            lp23_i + c23 * obs_j.V
        )
    if obs_j.R > obs_i.V:
        out += (float(H023(obs_i.V)) - float(H023(obs_j.R))) * math.exp(
            lp23_j + c23 * obs_i.V
        )
    if obs_i.R > obs_i.V:
        out += (float(H023(obs_i.R)) - float(H023(obs_i.V))) * math.exp(
            lp23_i + c23 * obs_i.V
        )
    if obs_j.R > obs_j.V:
        out += (float(H023(obs_j.R)) - float(H023(obs_j.V))) * math.exp(
            lp23_j + c23 * obs_j.V
        )

    if nuisance.censoring_model == "cox":
        H0C = nuisance.H0C
        lpC_i = float(np.dot(nuisance.betaC, obs_i.Z))
        lpC_j = float(np.dot(nuisance.betaC, obs_j.Z))
        dsum_i = obs_i.delta1 + obs_i.delta2
        dsum_j = obs_j.delta1 + obs_j.delta2
        out += (lpC_i - lpC_j) * (dsum_i - dsum_j)
        acc_i = 0.0
        if obs_i.V > obs_i.R:
            acc_i += float(H0C(obs_i.V)) - float(H0C(obs_i.R))
        if obs_j.V > obs_i.R:
            acc_i += float(H0C(obs_i.R)) - float(H0C(obs_j.V))
        out += acc_i * math.exp(lpC_i)
        acc_j = 0.0
        if obs_j.V > obs_j.R:
            acc_j += float(H0C(obs_j.V)) - float(H0C(obs_j.R))
        if obs_i.V > obs_j.R:
            acc_j += float(H0C(obs_j.R)) - float(H0C(obs_i.V))
        out += acc_j * math.exp(lpC_j)
    return out


def pair_term(nuisance: NuisanceSet, cohort: Cohort, i: int, j: int) -> PairTerm:
    obs = cohort.observations
    lz = log_zeta(nuisance, obs[i], obs[j])
    return PairTerm(i, j, lz, math.isfinite(lz))


class PairwiseObjective:
    """Vectorized objective/score/Hessian over one pair schedule.

    The plug-in factor log(zeta) and the baseline difference entering eta are
    fixed once per (cohort, nuisance, schedule); each evaluation at a new
    coefficient vector only rebuilds the eta parts. ``pair_weights`` (one
    non-negative weight per subject) scales term (i, j) by w_i * w_j while
    keeping the n*K_n normalizer, as used by the weighted bootstrap.
    """

    def __init__(self, cohort: Cohort, nuisance: NuisanceSet,
                 schedule: PairSchedule, pair_weights=None, template=None):
        if schedule.n != cohort.n:
            raise ValueError("schedule size does not match cohort size")
        self.cohort = cohort
        self.schedule = schedule
        if template is not None and template.cohort is cohort \
                and template.schedule is schedule:
            # nuisance-independent pair structure carried over from a prior
            # objective on the same cohort and schedule (bootstrap hot path)
            self.i_idx, self.j_idx = template.i_idx, template.j_idx
            self.Zi, self.Zj = template.Zi, template.Zj
            self.dd1 = template.dd1
        else:
            self.i_idx, self.j_idx = schedule.indices()
            self.Zi = cohort.Z[self.i_idx]
            self.Zj = cohort.Z[self.j_idx]
            d1 = cohort.delta1.astype(float)
            self.dd1 = d1[self.j_idx] - d1[self.i_idx]
        self.norm = float(schedule.n * schedule.K_n)
        self.Z = cohort.Z
        h12V = nuisance.H012(cohort.V)
        self.dH = h12V[self.i_idx] - h12V[self.j_idx]
        self.log_zeta = self._log_zeta_pairs(cohort, nuisance)
        self.valid = np.isfinite(self.log_zeta)
        self.n_invalid = int((~self.valid).sum())
        if pair_weights is None:
            self.term_w = None
        else:
            pair_weights = np.asarray(pair_weights, dtype=float)
            if pair_weights.shape != (cohort.n,):
                raise ValueError("pair_weights must have one entry per subject")
            self.term_w = pair_weights[self.i_idx] * pair_weights[self.j_idx]

    def _log_zeta_pairs(self, cohort, nuisance):
        i, j = self.i_idx, self.j_idx
        R, V = cohort.R, cohort.V
        d1 = cohort.delta1.astype(float)
        d2 = cohort.delta2.astype(float)

        lp13 = np.clip(self.Z @ nuisance.beta13, -LP_CLIP, LP_CLIP)
        e13 = np.exp(lp13)
        h13V = nuisance.H013(V)
        lz = (lp13[i] - lp13[j]) * (d2[j] - d2[i])
        lz += (h13V[i] - h13V[j]) * (e13[i] - e13[j])

        b23 = nuisance.beta23
        lp23 = np.clip(self.Z @ b23[:-1], -LP_CLIP, LP_CLIP)
        c23 = float(b23[-1])
        h23V = nuisance.H023(V)
        h23R = nuisance.H023(R)
        # own-window factor (H023(R)-H023(V)) e^{lp} 1(R > V), zero off-support
        self23 = np.where(
            R > V, (h23R - h23V) * np.exp(np.clip(lp23 + c23 * V, -LP_CLIP, LP_CLIP)), 0.0
        )
        cross_ij = np.where(
            R[i] > V[j],
            (h23V[j] - h23R[i]) * np.exp(np.clip(lp23[i] + c23 * V[j], -LP_CLIP, LP_CLIP)),
            0.0,
        )
        cross_ji = np.where(
            R[j] > V[i],
            (h23V[i] - h23R[j]) * np.exp(np.clip(lp23[j] + c23 * V[i], -LP_CLIP, LP_CLIP)),
            0.0,
        )
        lz += self23[i] + self23[j] + cross_ij + cross_ji

        if nuisance.censoring_model == "cox":
            lpC = np.clip(self.Z @ nuisance.betaC, -LP_CLIP, LP_CLIP)
            eC = np.exp(lpC)
            hCV = nuisance.H0C(V)
            hCR = nuisance.H0C(R)
            dsum = d1 + d2
            lz += (lpC[i] - lpC[j]) * (dsum[i] - dsum[j])
            selfC = np.where(V > R, hCV - hCR, 0.0)
            lz += (selfC[i] + np.where(V[j] > R[i], hCR[i] - hCV[j], 0.0)) * eC[i]
            lz += (selfC[j] + np.where(V[i] > R[j], hCR[j] - hCV[i], 0.0)) * eC[j]

        invalid = ((R[i] >= V[j]) & (d1[j] == 0)) | ((R[j] >= V[i]) & (d1[i] == 0))
        lz[invalid] = -np.inf
        return lz

    def _eta_parts(self, beta):
        beta = np.asarray(beta, dtype=float)
        g = np.clip(self.Z @ beta, -LP_CLIP, LP_CLIP)
        eg = np.exp(g)
        gi, gj = g[self.i_idx], g[self.j_idx]
        egi, egj = eg[self.i_idx], eg[self.j_idx]
        log_eta_v = (gi - gj) * self.dd1 + self.dH * (egi - egj)
        return eg, egi, egj, log_eta_v

    def loglik(self, beta) -> float:
        _, _, _, log_eta_v = self._eta_parts(beta)
        sp = np.logaddexp(0.0, self.log_zeta + log_eta_v)
        if self.term_w is not None:
            sp = sp * self.term_w
        return float(-sp.sum() / self.norm)

    def _sig_u(self, beta):
        _, egi, egj, log_eta_v = self._eta_parts(beta)
        x = self.log_zeta + log_eta_v
        sig = expit(x)
        u = self.dd1[:, None] * (self.Zi - self.Zj)
        u += self.dH[:, None] * (egi[:, None] * self.Zi - egj[:, None] * self.Zj)
        return x, sig, u, egi, egj

    def psi(self, beta) -> np.ndarray:
        """Per-pair score contributions (n*K_n rows); zero for invalid pairs."""
        _, sig, u, _, _ = self._sig_u(beta)
        return -sig[:, None] * u

    def _assemble_hessian(self, sig, u, egi, egj):
        tw = 1.0 if self.term_w is None else self.term_w
        w1 = sig * (1.0 - sig) * tw
        w2 = sig * self.dH * tw
        H = (u * w1[:, None]).T @ u
        diag = np.bincount(self.i_idx, weights=w2 * egi, minlength=self.cohort.n)
        diag -= np.bincount(self.j_idx, weights=w2 * egj, minlength=self.cohort.n)
        H += (self.Z * diag[:, None]).T @ self.Z
        H = -H / self.norm
        return (H + H.T) / 2.0

    def score(self, beta) -> np.ndarray:
        _, sig, u, _, _ = self._sig_u(beta)
        w = sig if self.term_w is None else sig * self.term_w
        return -(w @ u) / self.norm

    def hessian(self, beta) -> np.ndarray:
        _, sig, u, egi, egj = self._sig_u(beta)
        return self._assemble_hessian(sig, u, egi, egj)

    def score_and_hessian(self, beta):
        """One shared pass over the pair terms (variance hot path)."""
        _, sig, u, egi, egj = self._sig_u(beta)
        w = sig if self.term_w is None else sig * self.term_w
        return -(w @ u) / self.norm, self._assemble_hessian(sig, u, egi, egj)

    def evaluate(self, beta):
        """(loglik, score, hessian) sharing one pass of the eta parts."""
        x, sig, u, egi, egj = self._sig_u(beta)
        sp = np.logaddexp(0.0, x)
        w = sig if self.term_w is None else sig * self.term_w
        if self.term_w is not None:
            sp = sp * self.term_w
        ll = float(-sp.sum() / self.norm)
        score = -(w @ u) / self.norm
        return ll, score, self._assemble_hessian(sig, u, egi, egj)


def pair_loglik(beta12, nuisance, cohort, schedule, pair_weights=None) -> float:
    """Subsampled pairwise pseudo-log-likelihood at ``beta12``."""
    return PairwiseObjective(cohort, nuisance, schedule, pair_weights).loglik(beta12)


def pair_score(beta12, nuisance, cohort, schedule, pair_weights=None) -> np.ndarray:
    """Gradient of :func:`pair_loglik` with respect to ``beta12``."""
    return PairwiseObjective(cohort, nuisance, schedule, pair_weights).score(beta12)


def pair_hessian(beta12, nuisance, cohort, schedule, pair_weights=None) -> np.ndarray:
    """Jacobian of :func:`pair_score` (Hessian of the objective)."""
    return PairwiseObjective(cohort, nuisance, schedule, pair_weights).hessian(beta12)


def maximize(objective: PairwiseObjective, init, tol: float = 1e-9,
             max_iter: int = 100) -> PairwiseFit:
    """Newton ascent with step-halving on a prepared objective."""
    optimizer_calls.bump()
    if objective.n_invalid == len(objective.i_idx):
        raise DegenerateObjectiveError("every scheduled pair is invalid")
    beta = np.asarray(init, dtype=float).copy()
    ll, score, hess = objective.evaluate(beta)
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
            step = -np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "singular Hessian in pairwise maximization",
                last_beta=beta, grad_norm=grad_norm, iterations=iterations,
            ) from None
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step
            cand_ll, cand_score, cand_hess = objective.evaluate(cand)
            if cand_ll >= ll - 1e-12 * max(1.0, abs(ll)):
                beta, ll, score, hess = cand, cand_ll, cand_score, cand_hess
                accepted = True
                break
            step = step / 2.0
        if not accepted:
            raise ConvergenceError(
                "step-halving failed in pairwise maximization",
                last_beta=beta, grad_norm=grad_norm, iterations=iterations,
            )
    if not converged:
        raise ConvergenceError(
            f"pairwise maximization did not converge after {max_iter} iterations "
            f"(|grad| = {float(np.abs(score).max()):.3e})",
            last_beta=beta,
            grad_norm=float(np.abs(score).max()),
            iterations=iterations,
        )
    return PairwiseFit(
        beta=beta,
        converged=True,
        iterations=iterations,
        final_grad_norm=float(np.abs(score).max()),
        loglik=ll,
        n_invalid_pairs=objective.n_invalid,
        n_pairs=len(objective.i_idx),
    )


def fit_pairwise(cohort: Cohort, nuisance: NuisanceSet, schedule: PairSchedule,
                 init=None, tol: float = 1e-9, max_iter: int = 100,
                 pair_weights=None) -> PairwiseFit:
    """Maximize the subsampled pairwise pseudolikelihood.

    Initialized at the incident-only partial-likelihood estimate unless
    ``init`` overrides it.
    """
    objective = PairwiseObjective(cohort, nuisance, schedule, pair_weights)
    start = nuisance.beta12_pl if init is None else init
    return maximize(objective, start, tol=tol, max_iter=max_iter)
