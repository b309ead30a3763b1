"""Decomposition, concentration bound, CLT probe, labels, thresholds."""

import math

import numpy as np
import pytest

from phacklab import (
    DiagnosticsError,
    DomainError,
    PolicyClassError,
    ScenarioConfig,
    Trajectory,
    azuma_check,
    classify_convergence,
    clt_probe,
    doob_decompose,
    drift,
    ensemble_diagnostics,
    epsilon_threshold,
    escape_threshold,
    sigma_sq,
    simulate_ensemble,
    success_probs,
)


def make_trajectory(sm, p, eps, lambda0, choices, outcomes, index=0):
    """Assemble a trajectory by hand from chosen projects and outcomes."""
    lam = [lambda0]
    base, dist, sig = [], [], []
    for l, success in zip(choices, outcomes):
        p_a, p_b = success_probs(sm, l)
        up = math.log(l)
        down = math.log1p(-p * p_b) - math.log1p(-p * p_a)
        lam.append(lam[-1] + (up if success else down))
        parts = drift(sm, p, eps, l)
        base.append(parts.base)
        dist.append(parts.distortion)
        sig.append(sigma_sq(sm, p, eps, l))
    return Trajectory(
        index=index,
        lam=np.array(lam),
        l_star=np.array(choices, dtype=float),
        outcome=np.array(outcomes, dtype=bool),
        drift_base=np.array(base),
        drift_distortion=np.array(dist),
        sigma_sq=np.array(sig),
    )


def synthetic_path(lam_values):
    """Trajectory with a prescribed log-odds path and placeholder records."""
    lam = np.asarray(lam_values, dtype=float)
    k = lam.size - 1
    return Trajectory(
        index=0,
        lam=lam,
        l_star=np.ones(k),
        outcome=np.zeros(k, dtype=bool),
        drift_base=np.zeros(k),
        drift_distortion=np.zeros(k),
        sigma_sq=np.zeros(k),
    )


@pytest.fixture(scope="module")
def small_ensemble(sm, slow_payoff, slow_policy):
    cfg = ScenarioConfig(
        sm=sm, ps=slow_payoff, p=0.5, eps=0.01, lambda0=0.0, horizon=2000, seed=90210
    )
    return cfg, simulate_ensemble(cfg, 100, policy=slow_policy)


class TestDoobDecompose:
    def test_three_step_toy_by_hand(self, sm):
        """Hand-set branches: success of 2.0, failure of 0.5, success of 1.0."""
        p = 0.5
        traj = make_trajectory(sm, p, 0.0, 0.0, [2.0, 0.5, 1.0], [True, False, True])
        dec = doob_decompose(traj)

        drift_1 = drift(sm, p, 0.0, 2.0).total
        drift_2 = drift(sm, p, 0.0, 0.5).total
        expected_a = [0.0, drift_1, drift_1 + drift_2, drift_1 + drift_2 + 0.0]
        np.testing.assert_allclose(dec.A, expected_a, atol=1e-15)

        p_a, p_b = success_probs(sm, 0.5)
        inc_1 = math.log(2.0)
        inc_2 = math.log1p(-p * p_b) - math.log1p(-p * p_a)
        expected_m = [0.0, inc_1 - drift_1, inc_1 - drift_1 + inc_2 - drift_2]
        expected_m.append(expected_m[-1])  # the l = 1 step moves nothing
        np.testing.assert_allclose(dec.M, expected_m, atol=1e-12)

        expected_sig = np.concatenate(
            ([0.0], np.cumsum([sigma_sq(sm, p, 0.0, l) for l in (2.0, 0.5, 1.0)]))
        )
        np.testing.assert_allclose(dec.sigma_cum, expected_sig, atol=1e-15)

    def test_reconstruction_is_exact(self, small_ensemble):
        _, trajs = small_ensemble
        for traj in trajs[:25]:
            dec = doob_decompose(traj)
            np.testing.assert_allclose(
                traj.lam, traj.lam[0] + dec.M + dec.A, atol=1e-10
            )

    def test_martingale_increment_variance_matches_record(self, sm):
        """Var over the two branches of (increment - drift) equals the record."""
        p, eps = 0.5, 0.02
        for l in (0.4, 0.8, 1.7, 6.0):
            traj_s = make_trajectory(sm, p, eps, 0.0, [l], [True])
            traj_f = make_trajectory(sm, p, eps, 0.0, [l], [False])
            m_s = doob_decompose(traj_s).M[1]
            m_f = doob_decompose(traj_f).M[1]
            p_a, _ = success_probs(sm, l)
            q = p * (p_a + eps)
            var = q * m_s**2 + (1.0 - q) * m_f**2
            assert var == pytest.approx(traj_s.sigma_sq[0], rel=1e-12)

    def test_ensemble_martingale_mean_near_zero(self, small_ensemble):
        _, trajs = small_ensemble
        finals = np.array([doob_decompose(t).M[-1] for t in trajs])
        se = finals.std(ddof=1) / math.sqrt(finals.size)
        assert abs(finals.mean()) <= 4.0 * se

    def test_missing_records_raise(self, sm):
        traj = make_trajectory(sm, 0.5, 0.0, 0.0, [2.0, 0.5], [True, False])
        traj.drift_base = traj.drift_base[:1]
        with pytest.raises(DiagnosticsError):
            doob_decompose(traj)


class TestClassifyConvergence:
    def test_learned(self):
        lam = np.linspace(0.0, -60.0, 101)
        label = classify_convergence(synthetic_path(lam), learned_cut=-30.0, window=10)
        assert label.label == "learned"
        assert label.terminal_lambda == -60.0

    def test_failed_dip_and_recross(self):
        lam = np.concatenate([np.linspace(0.0, -20.0, 40), np.linspace(-20.0, 2.0, 61)])
        label = classify_convergence(synthetic_path(lam), learned_cut=-30.0, window=10)
        assert label.label == "failed"
        assert label.dipped and label.recrossed

    def test_undecided_flat(self):
        lam = np.zeros(101)
        label = classify_convergence(synthetic_path(lam), learned_cut=-30.0, window=10)
        assert label.label == "undecided"

    def test_window_precondition(self):
        with pytest.raises(DomainError):
            classify_convergence(synthetic_path(np.zeros(5)), window=10)


class TestAzumaCheck:
    def test_holds_on_learning_ensemble(self, small_ensemble):
        cfg, trajs = small_ensemble
        delta = 0.9 * abs(max(float(t.drift_total.max()) for t in trajs))
        report = azuma_check(trajs, delta, cfg, times=(200, 1000, 2000))
        assert report.applicable
        assert report.rows
        assert not any(r.violated for r in report.rows)

    def test_misconfigured_delta_inapplicable(self, small_ensemble):
        cfg, trajs = small_ensemble
        report = azuma_check(trajs, 5.0, cfg)
        assert not report.applicable
        assert "margin" in report.reason

    def test_tiny_horizon_bound_is_vacuous(self, small_ensemble):
        cfg, trajs = small_ensemble
        delta = 0.9 * abs(max(float(t.drift_total.max()) for t in trajs))
        report = azuma_check(trajs, delta, cfg, times=(1,))
        row = report.rows[0]
        assert row.bound > 0.99
        assert not row.violated


class TestCltProbe:
    def test_zero_level_degenerate(self, small_ensemble):
        cfg, trajs = small_ensemble
        report = clt_probe(trajs, [0.0], cfg)
        assert report.rows[0].degenerate

    def test_stopping_time_bound_and_normality(self, small_ensemble):
        cfg, trajs = small_ensemble
        report = clt_probe(trajs, [5.0, 20.0], cfg)
        for row in report.rows:
            assert row.tau_bound_ok
            assert row.n_included == len(trajs)
            assert row.tau_min >= row.nu / report.variance_bound - 1.0
        assert report.rows[1].ks_distance <= 0.15

    def test_unreachable_level_excluded(self, small_ensemble):
        cfg, trajs = small_ensemble
        report = clt_probe(trajs, [1e6], cfg)
        assert report.rows[0].n_included == 0
        assert report.rows[0].n_excluded == len(trajs)


class TestEpsilonThreshold:
    def test_positive_margin_on_learning_range(self, slow_payoff, sm):
        """Half the worst undistorted magnitude leaves room for hacking."""
        rng = (0.62, 2.0 / 3.0)
        grid = np.geomspace(*rng, 2000)
        delta = 0.5 * float(np.max(np.abs(drift(sm, 0.5, 0.0, grid).base)))
        est = epsilon_threshold(slow_payoff, sm, 0.5, rng, delta)
        assert est.ok
        assert est.epsilon > 0.0
        worst = float(np.max(drift(sm, 0.5, est.epsilon / 2.0, grid).total))
        assert worst <= -delta

    def test_uninformative_range_returns_zero(self, slow_payoff, sm):
        est = epsilon_threshold(slow_payoff, sm, 0.5, (1.0, 1.0), 0.001)
        assert est.epsilon == 0.0
        assert not est.ok
        assert "delta too large" in est.diagnostic

    def test_threshold_grows_as_delta_shrinks(self, slow_payoff, sm):
        """On a contrarian range the distortion term fights the margin, so the
        admissible intensity shrinks as the required margin grows."""
        rng = (1.4, 1.7)
        grid = np.geomspace(*rng, 2000)
        b = float(np.max(np.abs(drift(sm, 0.5, 0.0, grid).base)))
        eps_small = epsilon_threshold(slow_payoff, sm, 0.5, rng, 0.2 * b).epsilon
        eps_large = epsilon_threshold(slow_payoff, sm, 0.5, rng, 0.4 * b).epsilon
        assert eps_small > eps_large > 0.0

    def test_domain(self, slow_payoff, sm):
        with pytest.raises(DomainError):
            epsilon_threshold(slow_payoff, sm, 0.5, (0.0, 1.0), 0.01)
        with pytest.raises(DomainError):
            epsilon_threshold(slow_payoff, sm, 0.5, (0.5, 1.5), -0.1)


class TestEscapeThreshold:
    def test_fast_family_has_finite_thresholds(self, fast_payoff, sm):
        est = escape_threshold(fast_payoff, sm, 0.5, 0.05, 0.01)
        assert est.l_bar > 1.0
        assert est.lambda_bar <= 0.0
        assert est.verified
        assert est.min_drift_below > 0.0

    def test_no_hacking_no_escape(self, fast_payoff, sm):
        with pytest.raises(DiagnosticsError):
            escape_threshold(fast_payoff, sm, 0.5, 0.0, 0.01)

    def test_constricted_payoff_rejected(self, slow_payoff, sm):
        with pytest.raises(PolicyClassError):
            escape_threshold(slow_payoff, sm, 0.5, 0.05, 0.01)


class TestEnsembleDiagnostics:
    def test_report_structure_and_labels(self, small_ensemble):
        cfg, trajs = small_ensemble
        report = ensemble_diagnostics(
            trajs,
            cfg,
            learned_cut=-3.0,
            azuma_times=(200, 1000),
            nu_levels=(5.0, 20.0),
            martingale_times=(100, 1000),
            regime_lambda_cut=-2.0,
        )
        assert report["n_trajectories"] == len(trajs)
        assert set(report["labels"]) == {"learned", "failed", "undecided"}
        assert all(t.label in report["labels"] for t in trajs)
        assert report["max_doob_residual"] <= 1e-10
        assert report["threshold"]["kind"] == "epsilon_threshold"
        assert report["threshold"]["epsilon"] > 0.0
        lo, hi = report["policy_range_regime"]
        assert report["policy_range"][0] <= lo <= hi <= report["policy_range"][1]

    def test_linear_drift_of_learned_ensemble(self, slow_ensemble):
        """The least-squares slope of the mean log-odds path is negative and
        tracks the mean recorded per-period drift."""
        lam = np.stack([t.lam for t in slow_ensemble])
        mean_path = lam.mean(axis=0)
        t = np.arange(mean_path.size, dtype=float)
        slope = float(np.polyfit(t, mean_path, 1)[0])
        mean_drift = float(
            np.mean(np.concatenate([tr.drift_total for tr in slow_ensemble]))
        )
        assert slope < 0.0
        assert abs(slope - mean_drift) <= 0.10 * abs(mean_drift)

    def test_fast_report_uses_escape_threshold(self, sm, fast_payoff, fast_policy):
        cfg = ScenarioConfig(
            sm=sm, ps=fast_payoff, p=0.5, eps=0.05, horizon=500, seed=3, true_state="A"
        )
        trajs = simulate_ensemble(cfg, 20, policy=fast_policy)
        report = ensemble_diagnostics(
            trajs, cfg, learned_cut=-40.0, azuma_times=(), nu_levels=(), martingale_times=(100,)
        )
        assert report["threshold"]["kind"] == "escape_threshold"
        assert report["threshold"]["l_bar"] > 1.0
