import numpy as np
import pytest

from paircox import (
    PairSchedule,
    fit_nuisance,
    fit_pairwise,
    gen_cohort,
    make_scenario,
    bootstrap1,
    bootstrap2,
    bootstrap3,
    pair_score_outer,
    robust_se,
)
from helpers import brute_force_pair_score_outer
from paircox.errors import BootstrapError
from paircox.pairwise import PairwiseObjective, optimizer_calls
from paircox import variance as variance_mod
from paircox.variance import _boot1_replicate


@pytest.fixture(scope="module")
def fitted():
    cohort, _ = gen_cohort(make_scenario("A", 520, 13))
    nuisance, fits = fit_nuisance(cohort)
    schedule = PairSchedule(cohort.n, 20, shuffle_seed=13)
    pw = fit_pairwise(cohort, nuisance, schedule)
    return cohort, nuisance, fits, schedule, pw


class TestRobustSE:
    def test_grid_with_unit_mad(self):
        reps = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])[:, None]
        assert robust_se(reps)[0] == pytest.approx(1.4826)

    def test_constant_column_zero(self):
        reps = np.column_stack([np.full(6, 3.3), np.arange(6.0)])
        assert robust_se(reps)[0] == 0.0

    def test_outlier_resistance(self):
        rng = np.random.default_rng(3)
        clean = rng.normal(size=400)
        spiked = np.append(clean, 1e4)
        assert robust_se(spiked[:, None])[0] == pytest.approx(
            clean.std(ddof=1), rel=0.1
        )

    def test_needs_three_replicates(self):
        with pytest.raises(ValueError):
            robust_se(np.zeros((2, 1)))


class TestBootstrap1:
    def test_duplicate_replicate_seeds_give_zero_covariance(self, fitted):
        cohort, _, _, schedule, _ = fitted
        child = np.random.SeedSequence(99)
        out = bootstrap1(cohort, schedule, B=2, seed=0, replicate_seeds=[child, child])
        np.testing.assert_array_equal(out.covariance, 0.0)
        np.testing.assert_array_equal(
            out.replicate_estimates[0], out.replicate_estimates[1]
        )

    def test_unit_weights_reproduce_point_estimate(self, fitted):
        cohort, _, _, schedule, pw = fitted
        out = bootstrap1(cohort, schedule, B=2, seed=5, unit_weights=True)
        for row in out.replicate_estimates:
            np.testing.assert_allclose(row, pw.beta, atol=1e-6)

    def test_replicate_estimates_shape_and_se(self, fitted):
        cohort, _, _, schedule, _ = fitted
        out = bootstrap1(cohort, schedule, B=12, seed=7)
        assert out.method == "boot1"
        assert out.replicate_estimates.shape == (12 - out.n_dropped, cohort.p)
        np.testing.assert_allclose(out.se, np.sqrt(np.diag(out.covariance)))
        assert np.all(out.se > 0)

    def test_b_floor(self, fitted):
        cohort, _, _, schedule, _ = fitted
        with pytest.raises(ValueError):
            bootstrap1(cohort, schedule, B=1, seed=0)

    def test_excess_drops_hard_fail(self, fitted, monkeypatch):
        cohort, _, _, schedule, _ = fitted
        real = _boot1_replicate
        calls = {"k": 0}

        def flaky(args):
            calls["k"] += 1
            if calls["k"] % 2 == 0:
                return None
            return real(args)

        monkeypatch.setattr(variance_mod, "_boot1_replicate", flaky)
        with pytest.raises(BootstrapError):
            bootstrap1(cohort, schedule, B=8, seed=3)

    def test_moderate_drops_logged(self, fitted, monkeypatch, caplog):
        cohort, _, _, schedule, _ = fitted
        real = _boot1_replicate

        def flaky(args):
            flaky.k = getattr(flaky, "k", 0) + 1
            return None if flaky.k == 1 else real(args)

        monkeypatch.setattr(variance_mod, "_boot1_replicate", flaky)
        with caplog.at_level("WARNING"):
            out = bootstrap1(cohort, schedule, B=12, seed=3)
        assert out.n_dropped >= 1
        assert "dropped" in caplog.text


class TestBootstrap2:
    def test_zero_beta_covariance_collapses_to_weight_only_variation(self, fitted):
        # paired on identical replicate streams: removing the nuisance-beta
        # sampling leaves only weight variation, so the spread cannot grow
        # beyond replicate noise
        cohort, _, fits, schedule, _ = fitted
        seeds = list(np.random.SeedSequence(21).spawn(40))
        full = bootstrap1(cohort, schedule, B=40, seed=0, replicate_seeds=seeds)
        weight_only = bootstrap2(
            cohort, fits, schedule, B=40, seed=0, fixed_betas=True,
            replicate_seeds=seeds,
        )
        assert full.n_dropped == 0 and weight_only.n_dropped == 0
        ratio = weight_only.se / full.se
        assert ratio.mean() < 1.0
        assert ratio.max() < 1.2
        assert np.trace(weight_only.covariance) < np.trace(full.covariance)

    def test_duplicate_replicate_seeds_give_zero_covariance(self, fitted):
        cohort, _, fits, schedule, _ = fitted
        child = np.random.SeedSequence(7)
        out = bootstrap2(
            cohort, fits, schedule, B=2, seed=0, replicate_seeds=[child, child]
        )
        np.testing.assert_array_equal(out.covariance, 0.0)

    def test_se_positive(self, fitted):
        cohort, _, fits, schedule, _ = fitted
        out = bootstrap2(cohort, fits, schedule, B=12, seed=31)
        assert out.method == "boot2"
        assert np.all(out.se > 0)
        assert out.replicate_estimates is not None


class TestPairScoreOuter:
    brute_force = staticmethod(brute_force_pair_score_outer)

    def test_thinned_equals_full_when_ktilde_is_kn(self, fitted):
        cohort, nuisance, _, schedule, pw = fitted
        psi = PairwiseObjective(cohort, nuisance, schedule).psi(pw.beta)
        full = pair_score_outer(psi, schedule.n, schedule.K_n)
        thin = pair_score_outer(psi, schedule.n, schedule.K_n, Ktilde=schedule.K_n)
        np.testing.assert_allclose(full, thin, atol=1e-12, rtol=0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(8)
        n, K, p = 12, 5, 3
        psi = rng.normal(size=(n * K, p))
        for Kt in (2, 3, 5):
            got = pair_score_outer(psi, n, K, Ktilde=Kt)
            want = self.brute_force(psi, n, K, Kt)
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_ktilde_bounds(self):
        psi = np.zeros((20, 2))
        with pytest.raises(ValueError):
            pair_score_outer(psi, 4, 5, Ktilde=1)
        with pytest.raises(ValueError):
            pair_score_outer(psi, 4, 5, Ktilde=6)


class TestBootstrap3:
    def test_fixed_nuisance_reduces_to_pure_sandwich(self, fitted):
        cohort, nuisance, fits, schedule, pw = fitted
        out = bootstrap3(
            cohort, nuisance, fits, schedule, pw.beta, B=10, seed=3,
            fixed_nuisance=True,
        )
        objective = PairwiseObjective(cohort, nuisance, schedule)
        V1 = objective.hessian(pw.beta)
        V2 = pair_score_outer(objective.psi(pw.beta), schedule.n, schedule.K_n)
        V1_inv = np.linalg.inv(V1)
        np.testing.assert_allclose(out.covariance, V1_inv @ V2 @ V1_inv, atol=1e-12)
        # all replicate quotients identical: nuisance variation contributes 0
        assert np.ptp(out.u_replicates, axis=0).max() == 0.0

    def test_runs_without_optimizer(self, fitted):
        cohort, nuisance, fits, schedule, pw = fitted
        optimizer_calls.reset()
        out = bootstrap3(cohort, nuisance, fits, schedule, pw.beta, B=15, seed=4)
        assert optimizer_calls.count == 0
        assert out.method == "boot3"
        assert out.replicate_estimates is None
        assert out.u_replicates.shape[1] == cohort.p
        assert np.all(out.se > 0)

    def test_ktilde_thinning_changes_only_v2(self, fitted):
        cohort, nuisance, fits, schedule, pw = fitted
        a = bootstrap3(cohort, nuisance, fits, schedule, pw.beta, B=10, seed=9)
        b = bootstrap3(
            cohort, nuisance, fits, schedule, pw.beta, B=10, seed=9,
            Ktilde=schedule.K_n,
        )
        np.testing.assert_allclose(a.covariance, b.covariance, atol=1e-12)

    def test_mad_guard_triggers_on_outliers(self, fitted, monkeypatch):
        cohort, nuisance, fits, schedule, pw = fitted
        rng = np.random.default_rng(0)
        rows = iter(
            [rng.normal(size=cohort.p) * 0.01 for _ in range(9)]
            + [np.full(cohort.p, 50.0)]
        )
        monkeypatch.setattr(
            variance_mod, "_newton_quotient", lambda args: next(rows)
        )
        out = bootstrap3(cohort, nuisance, fits, schedule, pw.beta, B=10, seed=1)
        assert out.robust_mad
        # the spiked coordinate stays near the clean spread, not the outlier
        assert out.se.max() < 10.0

    def test_no_guard_on_clean_replicates(self, fitted):
        cohort, nuisance, fits, schedule, pw = fitted
        out = bootstrap3(cohort, nuisance, fits, schedule, pw.beta, B=20, seed=5)
        assert not out.robust_mad
