import numpy as np
import pytest

from paircox import (
    TransitionKind,
    breslow,
    fit_nuisance,
    fit_pl,
    gen_cohort,
    make_scenario,
    pl_information,
)
from paircox.data import build_cohort
from helpers import grid_pl_argmax
from paircox.errors import ConvergenceError, NoEventsError, RankDeficiencyError

T12 = TransitionKind.T12
T13 = TransitionKind.T13
T23 = TransitionKind.T23
CENS = TransitionKind.CENS


def six_subject_cohort(R=None):
    """Binary covariate, distinct event times, two censored rows."""
    V = [2.0, 3.0, 5.0, 7.0, 8.0, 11.0]
    d1 = [1, 0, 1, 1, 0, 1]
    z = np.array([1.0, 0.0, 0.0, 1.0, 1.0, 0.0])[:, None]
    R = [0.0] * 6 if R is None else R
    return build_cohort(list("abcdef"), R, V, d1, [0] * 6, V, [0] * 6, z, ["z"])


class TestFitPL:
    def test_no_covariate_contrast_gives_zero(self):
        c = build_cohort(
            list("abcd"), [0.0] * 4, [1.0, 2.0, 3.0, 4.0], [1, 1, 0, 1],
            [0] * 4, [1.0, 2.0, 3.0, 4.0], [0] * 4,
            np.full((4, 1), 0.7), ["z"],
        )
        fit = fit_pl(c, T12)
        assert fit.beta[0] == 0.0 and fit.converged

    def test_grid_search_oracle_no_truncation(self):
        c = six_subject_cohort()
        fit = fit_pl(c, T12)
        b_star = grid_pl_argmax([0.0] * 6, c.V, c.delta1, c.Z[:, 0],
                                np.arange(-5, 5.0001, 1e-4))
        assert abs(fit.beta[0] - b_star) < 1e-4

    def test_grid_search_oracle_delayed_entry(self):
        R = [0.0, 2.5, 0.0, 4.0, 0.0, 6.0]
        c = six_subject_cohort(R=R)
        fit = fit_pl(c, T12)
        b_star = grid_pl_argmax(R, c.V, c.delta1, c.Z[:, 0],
                                np.arange(-5, 5.0001, 1e-4))
        assert abs(fit.beta[0] - b_star) < 1e-4

    def test_weight_scale_invariance(self):
        c = six_subject_cohort()
        f1 = fit_pl(c, T12)
        fc = fit_pl(c, T12, weights=np.full(6, 5.3))
        np.testing.assert_allclose(f1.beta, fc.beta, atol=1e-10)

    def test_prevalent_row_does_not_move_incident_fit(self):
        base = six_subject_cohort()
        with_prev = build_cohort(
            list("abcdefg"), [0.0] * 6 + [9.0], list(base.V) + [4.5],
            list(base.delta1) + [1], [0] * 7, list(base.W) + [12.0], [0] * 7,
            np.vstack([base.Z, [[1.0]]]), ["z"],
        )
        f0, f1 = fit_pl(base, T12), fit_pl(with_prev, T12)
        np.testing.assert_array_equal(f0.beta, f1.beta)
        H0 = breslow(base, T12, f0.beta)
        H1 = breslow(with_prev, T12, f1.beta)
        np.testing.assert_array_equal(H0.increments, H1.increments)
        np.testing.assert_array_equal(H0.times, H1.times)

    def test_no_events_error(self):
        c = six_subject_cohort()
        with pytest.raises(NoEventsError):
            fit_pl(c, T23)  # nobody diseased with observed post-onset death

    def test_rank_deficiency_names_columns(self):
        c = six_subject_cohort()
        dup = build_cohort(
            c.ids, c.R, c.V, c.delta1, c.delta2, c.W, c.delta3,
            np.column_stack([c.Z[:, 0], c.Z[:, 0]]), ["z", "z_copy"],
        )
        with pytest.raises(RankDeficiencyError) as err:
            fit_pl(dup, T12)
        assert "z_copy" in str(err.value)

    def test_nonconvergence_diagnostics(self):
        c = six_subject_cohort()
        with pytest.raises(ConvergenceError) as err:
            fit_pl(c, T12, max_iter=1)
        assert err.value.grad_norm is not None
        assert err.value.last_beta is not None

    def test_converged_fit_meets_tolerance(self):
        fit = fit_pl(six_subject_cohort(), T12)
        assert fit.converged and fit.final_grad_norm < 1e-8
        assert fit.n_events == 4

    def test_inverse_information_inverts(self):
        cohort, _ = gen_cohort(make_scenario("A", 500, 2))
        for kind in (T12, T13, T23, CENS):
            fit = fit_pl(cohort, kind)
            info = pl_information(cohort, kind, fit.beta)
            identity = fit.inv_information @ info
            np.testing.assert_allclose(identity, np.eye(info.shape[0]), atol=1e-8)

    def test_weights_validation(self):
        c = six_subject_cohort()
        with pytest.raises(ValueError):
            fit_pl(c, T12, weights=np.ones(3))
        with pytest.raises(ValueError):
            fit_pl(c, T12, weights=np.zeros(6))
        with pytest.raises(ValueError):
            fit_pl(c, T12, weights=-np.ones(6))


class TestBreslow:
    def test_single_event_two_at_risk(self):
        c = build_cohort(
            ["x", "y"], [0.0, 0.0], [3.0, 4.0], [1, 0], [0, 0], [3.0, 4.0],
            [0, 0], np.array([[0.0], [1.0]]), ["z"],
        )
        H = breslow(c, T12, [0.0])
        np.testing.assert_allclose(H.times, [3.0])
        np.testing.assert_allclose(H.increments, [0.5])

    def test_no_events_gives_zero_function(self):
        c = build_cohort(
            ["x", "y"], [0.0, 0.0], [3.0, 4.0], [0, 0], [0, 0], [3.0, 4.0],
            [0, 0], np.array([[0.0], [1.0]]), ["z"],
        )
        H = breslow(c, T12, [0.0])
        assert H.times.size == 0 and H(100.0) == 0.0

    def test_post_onset_risk_windows_by_hand(self):
        # onset ages 2 and 3, deaths at 5 and 6; risk windows [2,5], [3,6]
        c = build_cohort(
            ["a", "b"], [0.0, 0.0], [2.0, 3.0], [1, 1], [0, 0], [5.0, 6.0],
            [1, 1], np.array([[0.3], [0.8]]), ["z"],
        )
        H = breslow(c, T23, [0.0, 0.0])
        np.testing.assert_allclose(H.times, [5.0, 6.0])
        np.testing.assert_allclose(H.increments, [0.5, 1.0])

    def test_jump_bound_all_transitions(self):
        # Breslow jumps are bounded by the exp-range over the smallest risk set
        cohort, _ = gen_cohort(make_scenario("A", 800, 4))
        nuisance, fits = fit_nuisance(cohort)
        for kind, fit in fits.items():
            H = fit.baseline
            assert np.all(H.increments > 0)
            assert np.all(np.isfinite(H.increments))
            if kind is T23:
                X = np.column_stack([cohort.Z, cohort.V])
                entry = np.maximum(cohort.R, cohort.V)
                exit_ = cohort.W
                live = cohort.delta1 == 1
            else:
                X = cohort.Z
                entry, exit_ = cohort.R, cohort.V
                live = entry <= exit_
            lp = X[live] @ fit.beta
            kappa = float(np.exp(np.abs(lp)).max())
            sizes = [
                int(((entry[live] <= t) & (t <= exit_[live])).sum()) for t in H.times
            ]
            assert min(sizes) >= 1
            assert H.increments.max() <= kappa / min(sizes) + 1e-12

    def test_nonfinite_beta_rejected(self):
        c = six_subject_cohort()
        with pytest.raises(ValueError):
            breslow(c, T12, [np.nan])


class TestInformation:
    def test_hand_example_bernoulli_half(self):
        c = build_cohort(
            ["x", "y"], [0.0, 0.0], [3.0, 4.0], [1, 0], [0, 0], [3.0, 4.0],
            [0, 0], np.array([[1.0], [0.0]]), ["z"],
        )
        info = pl_information(c, T12, [0.0])
        assert info[0, 0] == pytest.approx(0.25)

    def test_no_contrast_zero_matrix(self):
        c = build_cohort(
            ["x", "y"], [0.0, 0.0], [3.0, 4.0], [1, 1], [0, 0], [3.0, 4.0],
            [0, 0], np.array([[0.7], [0.7]]), ["z"],
        )
        np.testing.assert_allclose(pl_information(c, T12, [0.3]), 0.0, atol=1e-14)

    @staticmethod
    def loop_logpl(cohort, kind, beta, weights=None):
        """Independent log-PL oracle: explicit loops over events and risk sets."""
        w = np.ones(cohort.n) if weights is None else weights
        if kind is T23:
            X = np.column_stack([cohort.Z, cohort.V])
            entry, exit_ = np.maximum(cohort.R, cohort.V), cohort.W
            event = (cohort.delta3 == 1) & (cohort.delta1 == 1)
            live = (cohort.delta1 == 1) & (entry <= exit_)
        else:
            X, entry, exit_ = cohort.Z, cohort.R, cohort.V
            live = entry <= exit_
            event = {
                T12: (cohort.delta1 == 1) & live,
                T13: cohort.delta2 == 1,
                CENS: (cohort.delta1 + cohort.delta2) == 0,
            }[kind]
        total = 0.0
        for i in range(cohort.n):
            if not (event[i] and live[i]):
                continue
            t = exit_[i]
            s0 = sum(
                w[l] * np.exp(X[l] @ beta)
                for l in range(cohort.n)
                if live[l] and entry[l] <= t <= exit_[l]
            )
            total += w[i] * (X[i] @ beta - np.log(s0))
        return total

    def test_loglik_and_score_match_loop_oracle(self):
        cohort, _ = gen_cohort(make_scenario("A", 120, 8))
        rng = np.random.default_rng(0)
        from paircox.cox import _PLWork, _design

        for kind in (T12, T13, T23, CENS):
            X, entry, exit_, event, eligible, _ = _design(cohort, kind)
            w = rng.standard_exponential(cohort.n)
            work = _PLWork(X, entry, exit_, event, eligible, w)
            beta = rng.normal(scale=0.3, size=work.p)
            ll, score, _ = work.evaluate(beta)
            assert ll == pytest.approx(self.loop_logpl(cohort, kind, beta, w), rel=1e-10)
            h = 1e-6
            for a in rng.choice(work.p, size=3, replace=False):
                e = np.zeros(work.p)
                e[a] = h
                fd = (
                    self.loop_logpl(cohort, kind, beta + e, w)
                    - self.loop_logpl(cohort, kind, beta - e, w)
                ) / (2 * h)
                assert score[a] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_matches_finite_difference_of_score(self):
        cohort, _ = gen_cohort(make_scenario("A", 300, 8))
        rng = np.random.default_rng(0)
        from paircox.cox import _PLWork, _design

        for kind in (T12, T13, T23, CENS):
            X, entry, exit_, event, eligible, _ = _design(cohort, kind)
            work = _PLWork(X, entry, exit_, event, eligible, np.ones(cohort.n))
            beta = rng.normal(scale=0.3, size=work.p)
            if kind is T23:
                beta[-1] = 0.05  # keep the onset-age coefficient at a sane scale
            info = pl_information(cohort, kind, beta)
            fd = np.empty((work.p, work.p))
            for a in range(work.p):
                # step scaled to the covariate column so the FD is balanced
                h = 1e-6 / max(1.0, float(np.abs(X[:, a]).max()))
                e = np.zeros(work.p)
                e[a] = h
                fd[a] = -(
                    work.evaluate(beta + e)[1] - work.evaluate(beta - e)[1]
                ) / (2 * h)
            scale = np.abs(fd).max()
            assert np.abs(info - fd).max() / scale < 1e-6


class TestNuisance:
    def test_assembles_all_pieces(self):
        cohort, _ = gen_cohort(make_scenario("A", 500, 9))
        nuisance, fits = fit_nuisance(cohort)
        assert set(fits) == {T12, T13, T23, CENS}
        assert len(nuisance.beta23) == cohort.p + 1
        assert nuisance.censoring_model == "cox"
        assert nuisance.H0C is not None

    def test_censoring_none_drops_model(self):
        cohort, _ = gen_cohort(make_scenario("A", 500, 9))
        nuisance, fits = fit_nuisance(cohort, censoring_model="none")
        assert CENS not in fits
        assert nuisance.betaC is None and nuisance.H0C is None

    def test_unknown_model_rejected(self):
        cohort, _ = gen_cohort(make_scenario("A", 200, 9))
        with pytest.raises(ValueError):
            fit_nuisance(cohort, censoring_model="weird")
