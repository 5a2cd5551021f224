"""Cohort generators for the three benchmark scenarios.

Candidates are drawn in batches: covariates, recruitment age, censoring age,
onset age, and disease-free death age. When onset precedes the disease-free
death the death age is replaced by onset plus a freshly drawn post-onset
residual. Candidates are kept only if the (possibly substituted) death age
exceeds recruitment, so every emitted subject was alive at entry; the batch
grows geometrically until n candidates survive the cut.

Scenario A uses independent covariates from eight dissimilar marginals,
covariate-free recruitment and censoring, and constant-baseline
proportional-hazards transitions. Scenario B correlates the covariates
through a Gaussian copula (0.8 off-diagonal) and makes recruitment and
censoring covariate-dependent. Scenario C keeps the proportional-hazards
onset model but generates the other two transitions and censoring from
mechanisms that violate it, for misspecification stress-testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Cohort, StepFunction, build_cohort

COVARIATE_NAMES = tuple(f"x{k}" for k in range(1, 9))

BETA12_AB = np.array([2.0, -1.5, 0.1, -0.5, 1.0, -2.5, -1.0, 0.0])
BETA13_AB = np.array([0.3, 0.0, 0.0, 0.0, -0.2, 0.4, 0.0, 0.7])
BETA23_AB = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.3, 0.9, 0.05])
BETA12_C = np.array([2.0, -1.0, 0.1, -0.5, 1.0, -1.0, -1.0, 0.0])
# trailing component of the published censoring vector is padding; the
# censoring model has no onset-age covariate
BETA_C_B = np.array([0.0, 1.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0])

H012_AB = 0.02
H013_AB = 0.02
H023_AB = 0.05
H012_C = 0.01
CENS_RATE_A = 0.05
CENS_RATE_B = 0.05


class _Geometric0:
    """Geometric distribution on {0, 1, 2, ...} (failures before first success)."""

    def __init__(self, p):
        self.p = p

    def ppf(self, q):
        return stats.geom.ppf(q, self.p) - 1.0

    def mean(self):
        return (1.0 - self.p) / self.p

    def std(self):
        return np.sqrt(1.0 - self.p) / self.p


def standard_marginals():
    """The eight covariate marginals, in column order."""
    return [
        stats.gamma(a=2.0, scale=1.0 / 6.0),
        _Geometric0(1.0 / 10.0),
        stats.expon(scale=1.0 / 0.25),
        stats.beta(2.0, 8.0),
        stats.norm(loc=0.0, scale=2.0),
        stats.weibull_min(3.0, scale=4.0),
        stats.poisson(5.0),
        stats.uniform(),
    ]


def _copula_uniforms(rng, count, p, rho):
    """Uniform margins with Gaussian-copula dependence (rho off-diagonal)."""
    corr = np.full((p, p), rho)
    np.fill_diagonal(corr, 1.0)
    L = np.linalg.cholesky(corr)
    normals = rng.standard_normal((count, p)) @ L.T
    return stats.norm.cdf(normals)


def _raw_covariates(rng, count, correlated):
    if correlated:
        # scenarios B/C: the Gaussian copula itself, i.e. correlated uniform
        # margins; reproduces the published event counts, unlike pushing the
        # scenario-A marginals through the copula
        return _copula_uniforms(rng, count, len(COVARIATE_NAMES), 0.8)
    marginals = standard_marginals()
    U = _copula_uniforms(rng, count, len(marginals), 0.0)
    # guard the open interval so discrete ppf never returns inf
    U = np.clip(U, 1e-15, 1.0 - 1e-15)
    return np.column_stack([m.ppf(U[:, k]) for k, m in enumerate(marginals)])


def _minmax(raw):
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    if np.any(hi - lo <= 0):
        raise ValueError("degenerate covariate draw: constant column")
    return (raw - lo) / (hi - lo), lo, hi


def gen_covariates(setting, count, seed, return_raw=False):
    """Min-max standardized covariate matrix for scenario ``setting``.

    Scenario A draws the eight dissimilar marginals independently; B and C
    draw strongly correlated covariates from the 0.8 Gaussian copula
    (uniform margins, so min-max scaling is nearly the identity).
    """
    if setting not in ("A", "B", "C"):
        raise ValueError(f"unknown setting {setting!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    raw = _raw_covariates(rng, count, correlated=setting in ("B", "C"))
    std, lo, hi = _minmax(raw)
    if return_raw:
        return std, raw
    return std


def sample_cox_time(h0, beta, z, origin, u):
    """Inverse-transform event age for a proportional-hazards model.

    With a constant baseline rate this is origin - ln(u) / (h0 * exp(beta'z)).
    A :class:`StepFunction` baseline is inverted through its cumulative jumps;
    exhausting the jumps returns +inf.
    """
    rate_mult = np.exp(np.dot(beta, z) if np.ndim(z) == 1 else np.asarray(z) @ beta)
    draw = -np.log(u)
    if isinstance(h0, StepFunction):
        target = h0(origin) + draw / rate_mult
        k = np.searchsorted(h0._cum[1:], target, side="left")
        times = np.append(h0.times, np.inf)
        return times[k] if np.ndim(k) else float(times[k])
    if h0 <= 0:
        raise ValueError("baseline rate must be positive")
    return origin + draw / (h0 * rate_mult)


def _triangular_0_22(rng, m):
    # symmetric triangular on (0, 22) by inverse CDF, mode 11
    u = rng.random(m)
    lo = np.sqrt(u * 242.0)
    hi = 22.0 - np.sqrt((1.0 - u) * 242.0)
    return np.where(u <= 0.5, lo, hi)


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to draw one cohort.

    The four ``draw_*`` callables receive a Generator plus standardized
    covariates (and recruitment ages / onset ages where relevant) and return
    per-candidate ages. Onset itself always follows a constant-baseline
    proportional-hazards model with ``beta12``/``h012``.
    """

    setting: str
    n: int
    seed: int
    covariate_names: tuple
    beta12: np.ndarray
    h012: float
    draw_covariates: object   # (rng, m) -> raw (m, p) matrix
    draw_recruitment: object  # (rng, Z) -> R
    draw_death_pre: object    # (rng, Z) -> disease-free death age
    draw_death_post: object   # (rng, Z, t1) -> death age after onset at t1
    draw_censoring: object    # (rng, Z, R) -> censoring age (> R)
    beta13: np.ndarray | None = None
    beta23: np.ndarray | None = None
    betaC: np.ndarray | None = None
    h013: float | None = None
    h023: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.h012 <= 0:
            raise ValueError("h012 must be positive")


def scenario_a(n, seed) -> ScenarioSpec:
    def draw_cov(rng, m):
        return _raw_covariates(rng, m, correlated=False)

    def draw_rec(rng, Z):
        return _triangular_0_22(rng, Z.shape[0])

    def draw_pre(rng, Z):
        rate = H013_AB * np.exp(Z @ BETA13_AB)
        return rng.exponential(1.0 / rate)

    def draw_post(rng, Z, t1):
        rate = H023_AB * np.exp(Z @ BETA23_AB[:-1] + BETA23_AB[-1] * t1)
        return t1 + rng.exponential(1.0 / rate)

    def draw_cens(rng, Z, R):
        # exponential censoring conditioned on exceeding R; memorylessness
        # makes R + Exp(rate) exact
        return R + rng.exponential(1.0 / CENS_RATE_A, Z.shape[0])

    return ScenarioSpec(
        "A", n, seed, COVARIATE_NAMES, BETA12_AB, H012_AB,
        draw_cov, draw_rec, draw_pre, draw_post, draw_cens,
        beta13=BETA13_AB, beta23=BETA23_AB, h013=H013_AB, h023=H023_AB,
    )


def scenario_b(n, seed) -> ScenarioSpec:
    def draw_cov(rng, m):
        return _raw_covariates(rng, m, correlated=True)

    def draw_rec(rng, Z):
        eps = rng.standard_normal(Z.shape[0])
        return np.maximum(1.0 + 5.0 * Z[:, 0] + 7.0 * Z[:, 1] + 10.0 * Z[:, 5] + eps, 0.0)

    def draw_pre(rng, Z):
        rate = H013_AB * np.exp(Z @ BETA13_AB)
        return rng.exponential(1.0 / rate)

    def draw_post(rng, Z, t1):
        rate = H023_AB * np.exp(Z @ BETA23_AB[:-1] + BETA23_AB[-1] * t1)
        return t1 + rng.exponential(1.0 / rate)

    def draw_cens(rng, Z, R):
        # constant baseline, so the law of C given C > R is exactly
        # R + Exp(rate(Z)) by memorylessness
        rate = CENS_RATE_B * np.exp(Z @ BETA_C_B)
        return R + rng.exponential(1.0 / rate)

    return ScenarioSpec(
        "B", n, seed, COVARIATE_NAMES, BETA12_AB, H012_AB,
        draw_cov, draw_rec, draw_pre, draw_post, draw_cens,
        beta13=BETA13_AB, beta23=BETA23_AB, betaC=BETA_C_B,
        h013=H013_AB, h023=H023_AB,
    )


def scenario_c(n, seed) -> ScenarioSpec:
    def draw_cov(rng, m):
        return _raw_covariates(rng, m, correlated=True)

    def draw_rec(rng, Z):
        eps = rng.standard_normal(Z.shape[0])
        return np.maximum(1.0 + 5.0 * Z[:, 0] + 6.0 * Z[:, 1] + 4.0 * Z[:, 5] + eps, 0.0)

    def draw_pre(rng, Z):
        mu1 = np.sin(np.pi * Z[:, 0]) + 2.0 * np.abs(Z[:, 4] - 0.5) + Z[:, 5] ** 3
        return rng.exponential(mu1 / 0.04)

    def draw_post(rng, Z, t1):
        mu2 = (
            0.5
            + np.cos(np.pi * Z[:, 6]) ** 2
            + 2.0 * np.abs(Z[:, 7] - 0.5)
            + np.sqrt(np.maximum(t1, 0.0)) / 3.0
        )
        return t1 + rng.gamma(shape=mu2, scale=3.0)

    def draw_cens(rng, Z, R):
        mean_log = 3.0 * np.abs(Z[:, 1] - 0.5) + 2.0 * Z[:, 4]
        return R + rng.lognormal(mean_log, 1.5)

    return ScenarioSpec(
        "C", n, seed, COVARIATE_NAMES, BETA12_C, H012_C,
        draw_cov, draw_rec, draw_pre, draw_post, draw_cens,
    )


def make_scenario(setting, n, seed) -> ScenarioSpec:
    factories = {"A": scenario_a, "B": scenario_b, "C": scenario_c}
    if setting not in factories:
        raise ValueError(f"unknown setting {setting!r}; expected A, B, or C")
    return factories[setting](n, seed)


@dataclass(frozen=True)
class TruthRecord:
    """Latent times for the final candidate pool, for oracle checks.

    ``accepted`` marks the first-n candidates whose death age exceeded their
    recruitment age; ``kept`` gives their pool positions in cohort order.
    """

    Z: np.ndarray
    R: np.ndarray
    C: np.ndarray
    t1: np.ndarray
    t2_pre: np.ndarray
    t2: np.ndarray
    diseased: np.ndarray
    accepted: np.ndarray
    kept: np.ndarray
    scaling: tuple


_MAX_POOL_FACTOR = 4096


def gen_cohort(spec: ScenarioSpec):
    """Draw one cohort; returns ``(cohort, truth)``.

    Deterministic in ``spec.seed``: each growth attempt uses its own spawned
    child stream, so a successful attempt is unaffected by earlier failures.
    """
    ss = np.random.SeedSequence(spec.seed)
    factor = 4
    while True:
        rng = np.random.default_rng(ss.spawn(1)[0])
        m = factor * spec.n
        raw = spec.draw_covariates(rng, m)
        Z, lo, hi = _minmax(raw)
        R = spec.draw_recruitment(rng, Z)
        C = spec.draw_censoring(rng, Z, R)
        u = rng.random(m)
        t1 = -np.log(u) / (spec.h012 * np.exp(Z @ spec.beta12))
        t2_pre = spec.draw_death_pre(rng, Z)
        diseased = t1 < t2_pre
        t2_post = spec.draw_death_post(rng, Z, t1)
        t2 = np.where(diseased, t2_post, t2_pre)

        alive_at_entry = t2 > R
        n_ok = int(alive_at_entry.sum())
        if n_ok >= spec.n:
            kept = np.nonzero(alive_at_entry)[0][: spec.n]
            break
        if m >= _MAX_POOL_FACTOR * spec.n or (m >= 100_000 and n_ok < 0.001 * m):
            raise ValueError(
                f"setting {spec.setting}: sustained rejection rate above 99.9% "
                f"({n_ok}/{m} candidates alive at recruitment)"
            )
        factor *= 2

    accepted = np.zeros(m, dtype=bool)
    accepted[kept] = True

    zk, rk, ck = Z[kept], R[kept], C[kept]
    t1k, t2k, disk = t1[kept], t2[kept], diseased[kept]
    delta1 = disk & (t1k <= ck)
    delta2 = (~disk) & (t2k <= ck)
    V = np.where(delta1, t1k, np.where(delta2, t2k, ck))
    W = np.where(delta1, np.minimum(t2k, ck), V)
    delta3 = delta1 & (t2k <= ck)

    cohort = build_cohort(
        ids=[f"s{k + 1}" for k in range(spec.n)],
        R=rk, V=V,
        delta1=delta1.astype(int), delta2=delta2.astype(int),
        W=W, delta3=delta3.astype(int),
        Z=zk, covariate_names=spec.covariate_names,
        standardized=True,
        scaling=tuple((float(a), float(b)) for a, b in zip(lo, hi)),
    )
    truth = TruthRecord(
        Z=Z, R=R, C=C, t1=t1, t2_pre=t2_pre, t2=t2, diseased=diseased,
        accepted=accepted, kept=kept,
        scaling=tuple((float(a), float(b)) for a, b in zip(lo, hi)),
    )
    return cohort, truth


def write_truth_csv(truth: TruthRecord, path) -> None:
    """Sidecar CSV of latent pool times (one row per candidate)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate", "t1", "t2_pre", "t2", "c", "r", "diseased", "accepted"])
        for k in range(truth.Z.shape[0]):
            writer.writerow(
                [
                    k,
                    repr(float(truth.t1[k])),
                    repr(float(truth.t2_pre[k])),
                    repr(float(truth.t2[k])),
                    repr(float(truth.C[k])),
                    repr(float(truth.R[k])),
                    int(truth.diseased[k]),
                    int(truth.accepted[k]),
                ]
            )


def event_counts(cohort: Cohort) -> dict:
    """Observed transition counts: onset, prevalent, disease-free death, post-onset death."""
    return {
        "n12": int(cohort.delta1.sum()),
        "n_prev": cohort.n_prevalent,
        "n13": int(cohort.delta2.sum()),
        "n23": int(cohort.delta3.sum()),
    }


def custom_scenario(n, seed, draw_covariates, beta12, beta13, beta23,
                    covariate_names, h012=0.02, h013=0.02, h023=0.05,
                    censoring_rate=0.05) -> ScenarioSpec:
    """Proportional-hazards scenario with user-supplied covariate sampler.

    Recruitment is the symmetric triangular on (0, 22) and censoring is
    covariate-free exponential past recruitment, as in scenario A.
    """
    beta12 = np.asarray(beta12, dtype=float)
    beta13 = np.asarray(beta13, dtype=float)
    beta23 = np.asarray(beta23, dtype=float)
    if len(beta23) != len(beta13) + 1:
        raise ValueError("beta23 needs an extra onset-age coefficient")

    def draw_rec(rng, Z):
        return _triangular_0_22(rng, Z.shape[0])

    def draw_pre(rng, Z):
        rate = h013 * np.exp(Z @ beta13)
        return rng.exponential(1.0 / rate)

    def draw_post(rng, Z, t1):
        rate = h023 * np.exp(Z @ beta23[:-1] + beta23[-1] * t1)
        return t1 + rng.exponential(1.0 / rate)

    def draw_cens(rng, Z, R):
        return R + rng.exponential(1.0 / censoring_rate, Z.shape[0])

    return ScenarioSpec(
        "custom", n, seed, tuple(covariate_names), beta12, h012,
        draw_covariates, draw_rec, draw_pre, draw_post, draw_cens,
        beta13=beta13, beta23=beta23, h013=h013, h023=h023,
    )
