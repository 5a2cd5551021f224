"""Independent oracles shared by the unit and acceptance suites.

Everything here is deliberately written in the dumbest correct way
(explicit loops, literal formulas) so it cannot share bugs with the
vectorized library paths it checks.
"""

import numpy as np

from paircox.pairwise import log_eta, log_zeta


def grid_pl_argmax(R, V, d1, z, grid):
    """Exact one-covariate partial likelihood maximized by grid search."""
    def logpl(b):
        total = 0.0
        for i in range(len(V)):
            if d1[i]:
                risk = [l for l in range(len(V)) if R[l] <= V[i] <= V[l]]
                total += b * z[i] - np.log(sum(np.exp(b * z[l]) for l in risk))
        return total

    vals = [logpl(b) for b in grid]
    return grid[int(np.argmax(vals))]


def bh_brute_force(pvalues, level):
    """Step-up rule computed literally via running minima of m*p_(j)/j."""
    p = list(pvalues)
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adjusted = [None] * m
    running = 1.0
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        running = min(running, m * p[i] / rank)
        adjusted[i] = running
    reject = [adjusted[i] <= level for i in range(m)]
    return np.array(adjusted), np.array(reject)


class AllPairsOracle:
    """Scalar implementation of the complete-pair objective and derivatives."""

    def __init__(self, cohort, nuisance):
        self.obs = cohort.observations
        self.nuisance = nuisance
        self.n = cohort.n
        self.pairs = [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]

    def terms(self, beta):
        for i, j in self.pairs:
            a, b = self.obs[i], self.obs[j]
            x = log_zeta(self.nuisance, a, b) + log_eta(beta, self.nuisance.H012, a, b)
            yield a, b, x

    def loglik(self, beta):
        total = sum(np.logaddexp(0.0, x) for _, _, x in self.terms(beta))
        return -total / len(self.pairs)

    def score(self, beta):
        H012 = self.nuisance.H012
        acc = np.zeros(len(beta))
        for a, b, x in self.terms(beta):
            sig = 1.0 / (1.0 + np.exp(-x)) if x > -500 else 0.0
            gi, gj = float(beta @ a.Z), float(beta @ b.Z)
            u = (a.Z - b.Z) * (b.delta1 - a.delta1)
            u = u + (float(H012(a.V)) - float(H012(b.V))) * (
                np.exp(gi) * a.Z - np.exp(gj) * b.Z
            )
            acc += -sig * u
        return acc / len(self.pairs)

    def hessian(self, beta):
        H012 = self.nuisance.H012
        p = len(beta)
        acc = np.zeros((p, p))
        for a, b, x in self.terms(beta):
            sig = 1.0 / (1.0 + np.exp(-x)) if x > -500 else 0.0
            gi, gj = float(beta @ a.Z), float(beta @ b.Z)
            dH = float(H012(a.V)) - float(H012(b.V))
            u = (a.Z - b.Z) * (b.delta1 - a.delta1) + dH * (
                np.exp(gi) * a.Z - np.exp(gj) * b.Z
            )
            M = dH * (np.exp(gi) * np.outer(a.Z, a.Z) - np.exp(gj) * np.outer(b.Z, b.Z))
            acc += -(sig * (1 - sig) * np.outer(u, u) + sig * M)
        return acc / len(self.pairs)


def brute_force_pair_score_outer(psi, n, K, Kt):
    """Literal triple-sum version of the pair-score outer-product estimate."""
    p = psi.shape[1]
    own = np.zeros((p, p))
    cross = np.zeros((p, p))
    blocks = psi.reshape(n, K, p)
    for i in range(n):
        for a in range(Kt):
            own += np.outer(blocks[i, a], blocks[i, a])
            for b in range(Kt):
                if a != b:
                    cross += np.outer(blocks[i, a], blocks[i, b])
    return own / (n * n * K * Kt) + cross * (
        2.0 * (2.0 * K - 1.0) / (n * n * K * Kt * (Kt - 1.0))
    )


def synthetic_nuisance(p=8, censoring="cox", seed=0):
    """Arbitrary fixed plug-ins spanning typical ages; identities hold for any."""
    from paircox import NuisanceSet, StepFunction

    rng = np.random.default_rng(seed)

    def steps(total, k=6):
        times = np.sort(rng.uniform(1.0, 90.0, size=k))
        incs = rng.dirichlet(np.ones(k)) * total
        return StepFunction(times, incs)

    return NuisanceSet(
        beta12_pl=rng.normal(scale=0.4, size=p),
        beta13=rng.normal(scale=0.3, size=p),
        beta23=np.append(rng.normal(scale=0.3, size=p), 0.03),
        H012=steps(0.8),
        H013=steps(1.2),
        H023=steps(2.0),
        censoring_model=censoring,
        betaC=rng.normal(scale=0.2, size=p) if censoring == "cox" else None,
        H0C=steps(1.5) if censoring == "cox" else None,
    )
