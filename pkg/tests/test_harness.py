"""Tests for the Monte-Carlo experiment harness and its statistics."""

import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from heavytail_opt.harness import (
    ExperimentSpec,
    TrialSummary,
    binomial_gate,
    clipped_moment_check,
    clopper_pearson_lower,
    derive_parameters,
    gap_at_budgets,
    measure_draw_throughput,
    planned_oracle_budget,
    project_runtime,
    rate_regression,
    run_experiment,
    start_point,
    theorem_iteration_curve,
)
from heavytail_opt.problems import ProblemSpec, make_noise, make_problem
from heavytail_opt.schedules import ConfigError, SGDConfig, SSTMConfig

QUAD2 = ProblemSpec(kind="quadratic", dim=2, eig_min=1.0, eig_max=1.0, seed=8)


def sgd_spec(**overrides):
    kw = dict(
        problem=QUAD2,
        noise_family="gaussian",
        sigma=0.5,
        method="clipped_sgd",
        eps=0.05,
        beta=0.1,
        r0=1.0,
        trials=8,
        seed=1234,
        param_mode="manual",
        manual={"gamma": 0.05, "lam": 5.0, "m": 1, "N": 64},
    )
    kw.update(overrides)
    return ExperimentSpec(**kw)


class TestSpecValidation:
    def test_beta_message_names_beta(self):
        with pytest.raises(ValueError, match="beta"):
            sgd_spec(beta=1.5)

    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError, match="trials"):
            sgd_spec(trials=0)
        with pytest.raises(ValueError, match="method"):
            sgd_spec(method="adam")
        with pytest.raises(ValueError, match="noise family"):
            sgd_spec(noise_family="cauchy")
        with pytest.raises(ValueError, match="eps"):
            sgd_spec(eps=0.0)
        with pytest.raises(ValueError, match="r0"):
            sgd_spec(r0=-1.0)
        with pytest.raises(ValueError, match="param_mode"):
            sgd_spec(param_mode="auto")
        with pytest.raises(ValueError, match="fractions"):
            sgd_spec(budget_fractions=(0.5, 1.5))

    def test_manual_table_must_match_mode(self):
        with pytest.raises(ValueError, match="manual"):
            sgd_spec(manual=None)
        with pytest.raises(ValueError, match="manual"):
            sgd_spec(param_mode="theorem")  # keeps the manual table

    def test_trial_summary_rejects_impossible_gap(self):
        with pytest.raises(ValueError, match="floor"):
            TrialSummary(trial_id=0, final_gap=-1e-6, final_dist_sq=0.0,
                         total_oracle_calls=1, diverged=False,
                         max_dist_from_xstar=0.0)
        s = TrialSummary(trial_id=0, final_gap=-1e-10, final_dist_sq=0.0,
                         total_oracle_calls=1, diverged=False,
                         max_dist_from_xstar=0.0)
        assert s.final_gap == -1e-10


class TestParameterDerivation:
    def test_manual_sgd_defaults(self):
        p = make_problem(QUAD2)
        cfg = derive_parameters(sgd_spec(manual={"gamma": 0.1, "N": 10}), p)
        assert isinstance(cfg, SGDConfig)
        assert cfg.lam == math.inf and cfg.m == 1 and cfg.clip_mode == "norm"
        base = derive_parameters(
            sgd_spec(method="sgd_baseline", manual={"gamma": 0.1, "N": 10}), p
        )
        assert base.clip_mode == "none"

    def test_manual_sstm_default_stepsize_seed(self):
        p = make_problem(QUAD2)
        spec = sgd_spec(method="clipped_sstm", sigma=0.0,
                        manual={"a": 2.0, "B": 5.0, "N": 8})
        cfg = derive_parameters(spec, p)
        assert isinstance(cfg, SSTMConfig)
        nu, m_nu = p.smoothness.nu, p.smoothness.m_nu
        want = (spec.eps / 2.0) ** ((1 - nu) / (1 + nu)) / (
            2.0 ** (2 * nu / (1 + nu)) * 2.0 * m_nu ** (2 / (1 + nu))
        )
        assert cfg.alpha0 == pytest.approx(want, rel=1e-15)

    def test_unknown_manual_keys_rejected(self):
        p = make_problem(QUAD2)
        with pytest.raises(ConfigError, match="bogus"):
            derive_parameters(
                sgd_spec(manual={"gamma": 0.1, "N": 10, "bogus": 1.0}), p
            )
        with pytest.raises(ConfigError, match="missing"):
            derive_parameters(
                sgd_spec(method="clipped_sstm", manual={"a": 2.0, "N": 8}), p
            )

    def test_restarted_methods_reject_manual(self):
        p = make_problem(QUAD2)
        tables = {
            "r_clipped_sstm": {"a": 2.0, "B": 5.0, "N": 10},
            "r_clipped_sgd": {"gamma": 0.1, "N": 10},
        }
        for method, manual in tables.items():
            with pytest.raises(ConfigError, match="restarted"):
                derive_parameters(sgd_spec(method=method, manual=manual), p)

    def test_baseline_requires_manual(self):
        p = make_problem(QUAD2)
        with pytest.raises(ConfigError, match="manual"):
            derive_parameters(
                sgd_spec(method="sgd_baseline", param_mode="theorem", manual=None), p
            )

    def test_planned_budget_shapes(self):
        p = make_problem(QUAD2)
        cfg = derive_parameters(sgd_spec(manual={"gamma": 0.1, "N": 10, "m": 3}), p)
        assert planned_oracle_budget(cfg) == 30

    def test_start_point_distance_is_exact(self):
        p = make_problem(ProblemSpec(kind="quadratic", dim=7, eig_min=0.5,
                                     eig_max=2.0, seed=3))
        x0 = start_point(p, 2.5)
        assert float(np.linalg.norm(x0 - p.x_star)) == pytest.approx(2.5, rel=1e-14)


class TestRunExperiment:
    def test_worker_count_does_not_change_results(self):
        spec = sgd_spec(trials=6, manual={"gamma": 0.05, "lam": 5.0, "m": 1, "N": 40})
        res1 = run_experiment(spec, workers=1)
        res2 = run_experiment(spec, workers=2)
        assert [s.final_gap for s in res1.summaries] == [s.final_gap for s in res2.summaries]
        assert [s.total_oracle_calls for s in res1.summaries] == [
            s.total_oracle_calls for s in res2.summaries
        ]
        assert res1.success_count == res2.success_count
        assert res1.gap_quantiles == res2.gap_quantiles
        for b1, b2 in zip(res1.budget_quantiles, res2.budget_quantiles):
            assert b1.oracle_calls == b2.oracle_calls
            assert b1.quantiles == b2.quantiles

    def test_oracle_spend_matches_plan_exactly(self):
        spec = sgd_spec(
            method="clipped_sstm", sigma=0.3, trials=3,
            manual={"a": 2.0, "alpha0": 0.01, "B": 5.0, "N": 25},
        )
        res = run_experiment(spec)
        assert res.planned_budget > 25  # noisy batches exceed one call per step
        for s in res.summaries:
            assert not s.diverged
            assert s.total_oracle_calls == res.planned_budget

    def test_quantiles_and_budget_curve_are_monotone(self):
        spec = sgd_spec(sigma=0.0, trials=4)
        res = run_experiment(spec)
        q = res.gap_quantiles
        assert q["q50"] <= q["q90"] <= q["q95"]
        fracs = [b.fraction for b in res.budget_quantiles]
        assert fracs == [0.25, 0.5, 1.0]
        assert res.budget_quantiles[0].oracle_calls == math.ceil(0.25 * res.planned_budget)
        medians = [b.quantiles["q50"] for b in res.budget_quantiles]
        assert medians[0] >= medians[1] >= medians[2]

    def test_zero_noise_trials_are_identical(self):
        res = run_experiment(sgd_spec(sigma=0.0, trials=5))
        gaps = {s.final_gap for s in res.summaries}
        assert len(gaps) == 1
        assert res.success_rate in (0.0, 1.0)
        assert res.ci_lower_95 == clopper_pearson_lower(res.success_count, 5)
        for s in res.summaries:
            assert s.max_dist_from_xstar >= 1.0 * (1 - 1e-12)

    def test_restarted_run_reports_stage_outcomes(self):
        spec = sgd_spec(
            method="r_clipped_sgd", param_mode="theorem", manual=None,
            sigma=0.05, eps=0.125, trials=2, record=True,
        )
        res = run_experiment(spec)
        assert res.stage_outcomes is not None and len(res.stage_outcomes) == 2
        tau = res.config.tau
        for stages in res.stage_outcomes:
            assert len(stages) == tau
        assert res.records is not None and len(res.records) == 2
        assert res.planned_budget == res.config.total_oracle_calls()

    def test_gap_at_budgets_reads_last_row_within_budget(self):
        spec = sgd_spec(sigma=0.0, trials=1, record=True)
        res = run_experiment(spec)
        rec = res.records[0]
        gaps = gap_at_budgets(rec, [1, 17, 10**9])
        assert gaps[0] == rec.f_gap[1]
        assert gaps[1] == rec.f_gap[17]
        assert gaps[2] == rec.f_gap[-1]

    def test_workers_must_be_positive(self):
        with pytest.raises(ValueError):
            run_experiment(sgd_spec(trials=1), workers=0)


class TestBinomialStatistics:
    def test_clopper_pearson_edges_and_formula(self):
        assert clopper_pearson_lower(0, 50) == 0.0
        got = clopper_pearson_lower(95, 100)
        want = float(scipy_stats.beta.ppf(0.05, 95, 6))
        assert got == pytest.approx(want, rel=1e-12)
        assert clopper_pearson_lower(100, 100) == pytest.approx(0.05 ** (1 / 100), rel=1e-12)
        assert got < 0.95
        with pytest.raises(ValueError):
            clopper_pearson_lower(5, 4)
        with pytest.raises(ValueError):
            clopper_pearson_lower(0, 0)

    def test_gate_matches_exact_binomial_test(self):
        for s in (70, 80, 82, 85, 90, 100):
            gate = binomial_gate(s, 100, 0.9, alpha=0.01)
            want_p = float(scipy_stats.binom.cdf(s, 100, 0.9))
            assert gate.p_value == pytest.approx(want_p, rel=1e-12)
            assert gate.passed == (want_p >= 0.01)
        assert binomial_gate(100, 100, 0.9).passed
        assert not binomial_gate(0, 100, 0.9).passed

    def test_gate_threshold_is_self_consistent(self):
        gate = binomial_gate(90, 100, 0.9, alpha=0.01)
        k = gate.min_successes
        assert k == int(scipy_stats.binom.ppf(0.01, 100, 0.9))
        assert binomial_gate(k, 100, 0.9).passed
        assert not binomial_gate(k - 1, 100, 0.9).passed

    def test_gate_validation(self):
        with pytest.raises(ValueError):
            binomial_gate(5, 4, 0.9)
        with pytest.raises(ValueError):
            binomial_gate(1, 4, 1.5)


class TestRateRegression:
    def test_exact_power_law_is_recovered(self):
        eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
        counts = 3.0 * eps**-2.0
        fit = rate_regression(eps, counts)
        assert fit.slope == pytest.approx(-2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
        assert fit.max_abs_residual < 1e-12
        assert fit.n_points == 4

    def test_validation(self):
        with pytest.raises(ValueError, match="4"):
            rate_regression([1e-1, 1e-2, 1e-3], [1, 2, 3])
        with pytest.raises(ValueError, match="decades"):
            rate_regression([0.1, 0.2, 0.3, 0.4], [1, 2, 3, 4])
        with pytest.raises(ValueError):
            rate_regression([1e-1, 1e-2, 1e-3, -1e-4], [1, 2, 3, 4])
        with pytest.raises(ValueError):
            rate_regression([[1e-1, 1e-2], [1e-3, 1e-4]], [[1, 2], [3, 4]])

    def test_theorem_curve_recovers_accelerated_exponent(self):
        eps, counts = theorem_iteration_curve(
            "clipped_sstm", nu=1.0, m_nu=1.0, beta=0.1, r0=1.0, sigma=0.2,
            eps_values=np.logspace(-1, -4, 7),
        )
        fit = rate_regression(eps, counts)
        assert fit.slope == pytest.approx(-0.5, abs=1e-3)

    def test_theorem_curve_undeflated_matches_config(self):
        from heavytail_opt.schedules import sgd_theorem_params

        eps_values = (0.3, 0.1)
        _, counts = theorem_iteration_curve(
            "clipped_sgd", nu=1.0, m_nu=1.0, beta=0.1, r0=1.0, sigma=0.2,
            eps_values=eps_values, deflate_logs=False,
        )
        for eps, n in zip(eps_values, counts):
            cfg = sgd_theorem_params(1.0, 1.0, eps, 0.1, 1.0, 0.2)
            assert n == cfg.N
        with pytest.raises(ValueError):
            theorem_iteration_curve("newton", 1.0, 1.0, 0.1, 1.0, 0.2,
                                    eps_values=(0.1, 0.01))


class TestClippedMomentCheck:
    def test_zero_noise_moments_vanish(self):
        p = make_problem(QUAD2)
        x = p.x_star + np.array([0.1, 0.0])
        res = clipped_moment_check(p, make_noise("gaussian", 0.0, 0.0, 2), x,
                                   lam=1.0, m=1, draws=100_000,
                                   rng=np.random.default_rng(0))
        assert not res.skipped
        # The estimator equals the exact gradient draw by draw (distortion is
        # identically zero); the mean picks up only float accumulation noise.
        assert res.distortion == 0.0
        assert res.bias_norm <= 1e-10
        assert res.variance <= 1e-20
        assert res.ok and res.magnitude_ok

    def test_moment_bounds_hold_under_gaussian_noise(self):
        p = make_problem(QUAD2)
        x = p.x_star + np.array([0.1, 0.0])
        noise = make_noise("gaussian", 0.5, 0.0, 2)
        res = clipped_moment_check(p, noise, x, lam=5.0, m=2, draws=100_000,
                                   rng=np.random.default_rng(7))
        assert not res.skipped
        assert res.ok
        assert res.bias_bound == pytest.approx(4 * 0.25 / (2 * 5.0), rel=1e-15)
        assert res.distortion_bound == pytest.approx(18 * 0.25 / 2, rel=1e-15)
        assert res.variance <= res.variance_bound
        assert res.max_magnitude <= 2 * 5.0 + 1e-9

    def test_violated_hypothesis_is_skipped_not_failed(self):
        p = make_problem(QUAD2)
        x = p.x_star + np.array([10.0, 0.0])
        res = clipped_moment_check(p, make_noise("gaussian", 0.5, 0.0, 2), x,
                                   lam=1.0, m=1, draws=100_000,
                                   rng=np.random.default_rng(0))
        assert res.skipped
        assert "hypothesis violated" in res.reason
        assert not res.ok

    def test_validation(self):
        p = make_problem(QUAD2)
        noise = make_noise("gaussian", 0.5, 0.0, 2)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="1e5"):
            clipped_moment_check(p, noise, p.x_star, 1.0, 1, 50_000, rng)
        with pytest.raises(ValueError):
            clipped_moment_check(p, noise, p.x_star, 1.0, 0, 100_000, rng)
        with pytest.raises(ValueError):
            clipped_moment_check(p, noise, p.x_star, 0.0, 1, 100_000, rng)


class TestRuntimeProjection:
    def test_projection_counts_total_draws(self):
        spec = sgd_spec(trials=10, manual={"gamma": 0.05, "m": 4, "N": 25})
        proj = project_runtime(spec, target_seconds=0.05)
        assert proj.draws_per_trial == 100
        assert proj.total_draws == 1000
        assert proj.draws_per_second > 0
        assert proj.projected_seconds == pytest.approx(
            proj.total_draws / proj.draws_per_second
        )

    def test_zero_noise_throughput_is_rejected(self):
        with pytest.raises(ValueError):
            measure_draw_throughput(make_noise("gaussian", 0.0, 0.0, 2),
                                    np.random.default_rng(0))
