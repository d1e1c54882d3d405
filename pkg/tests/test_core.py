"""Tests for the clipping operator, oracle model, and certificate probes."""

import math

import numpy as np
import pytest

from heavytail_opt.core import (
    CertificateCheckResult,
    HolderSmoothness,
    IterateDivergedError,
    ProblemInstance,
    StochasticGradientSample,
    as_vector,
    batched_stochastic_gradient,
    clip,
    clip_coordinates,
    finite_difference_check,
    gradient_norm_bound,
    gradient_sq_bound,
    holder_certificate_check,
)
from heavytail_opt.problems import ProblemSpec, make_noise, make_problem


class TestClip:
    def test_exact_value_above_threshold(self):
        out = clip(np.array([3.0, 4.0]), 2.5)
        np.testing.assert_allclose(out, [1.5, 2.0], rtol=0, atol=0)

    def test_under_threshold_returns_unchanged_copy(self):
        g = np.array([0.3, -0.4])
        out = clip(g, 2.0)
        np.testing.assert_array_equal(out, g)
        out[0] = 99.0  # must not alias the input
        assert g[0] == 0.3

    def test_zero_vector_maps_to_zero(self):
        out = clip(np.zeros(4), 1.0)
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            g = rng.standard_normal(5) * 10.0 ** rng.uniform(-3, 3)
            lam = 10.0 ** rng.uniform(-3, 3)
            c = 10.0 ** rng.uniform(-2, 2)
            np.testing.assert_allclose(clip(c * g, c * lam), c * clip(g, lam), rtol=1e-12)

    def test_norm_capped_and_direction_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            g = rng.standard_normal(7) * 10.0 ** rng.uniform(-2, 4)
            lam = 10.0 ** rng.uniform(-2, 2)
            out = clip(g, lam)
            assert np.linalg.norm(out) <= lam * (1.0 + 1e-12)
            gnorm = np.linalg.norm(g)
            if gnorm > 0:
                cos = float(out @ g) / (np.linalg.norm(out) * gnorm)
                assert cos == pytest.approx(1.0, abs=1e-12)

    def test_survives_entries_near_the_float_ceiling(self):
        # A vector this large overflows the naive squared-sum norm; the
        # operator must still scale it to the threshold, not squash it to 0.
        g = np.array([1e308, 1e308])
        out = clip(g, 2.5)
        assert np.linalg.norm(out) == pytest.approx(2.5, rel=1e-12)
        assert out[0] == out[1] > 0
        # under an astronomically large threshold it passes through unchanged
        big = np.array([-1e308])
        np.testing.assert_array_equal(clip(big, 1e308), big)

    def test_rejects_nonpositive_threshold(self):
        with pytest.raises(ValueError):
            clip(np.ones(2), 0.0)
        with pytest.raises(ValueError):
            clip(np.ones(2), -1.0)

    def test_rejects_nonfinite_input(self):
        with pytest.raises(ValueError):
            clip(np.array([1.0, np.inf]), 1.0)
        with pytest.raises(ValueError):
            clip(np.array([np.nan]), 1.0)


class TestClipCoordinates:
    def test_per_coordinate_box(self):
        out = clip_coordinates(np.array([-3.0, 0.5]), 1.0)
        np.testing.assert_array_equal(out, [-1.0, 0.5])

    def test_all_entries_within_box(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal(50) * 10
        out = clip_coordinates(g, 0.7)
        assert np.all(np.abs(out) <= 0.7)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            clip_coordinates(np.ones(2), 0.0)
        with pytest.raises(ValueError):
            clip_coordinates(np.array([np.inf]), 1.0)


class TestAsVector:
    def test_coerces_lists_to_float64(self):
        v = as_vector([1, 2, 3])
        assert v.dtype == np.float64
        assert v.flags["C_CONTIGUOUS"]

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            as_vector([1.0, 2.0], dim=3)

    def test_rejects_matrix_and_nonfinite(self):
        with pytest.raises(ValueError):
            as_vector(np.ones((2, 2)))
        with pytest.raises(ValueError):
            as_vector([1.0, np.nan])


class TestHolderSmoothness:
    def test_validation(self):
        with pytest.raises(ValueError):
            HolderSmoothness(nu=-0.1, m_nu=1.0)
        with pytest.raises(ValueError):
            HolderSmoothness(nu=1.5, m_nu=1.0)
        with pytest.raises(ValueError):
            HolderSmoothness(nu=0.5, m_nu=0.0)
        with pytest.raises(ValueError):
            HolderSmoothness(nu=0.5, m_nu=1.0, radius=0.0)
        s = HolderSmoothness(nu=0.5, m_nu=2.0)
        assert s.radius == math.inf


class TestStochasticGradientSample:
    def test_validation(self):
        with pytest.raises(ValueError):
            StochasticGradientSample(value=np.zeros(2), batch_size=0, oracle_calls_consumed=0)
        with pytest.raises(ValueError):
            StochasticGradientSample(value=np.zeros(2), batch_size=3, oracle_calls_consumed=2)


class TestBatchedStochasticGradient:
    def setup_method(self):
        self.p = make_problem(ProblemSpec(kind="quadratic", dim=4, eig_min=1.0, eig_max=3.0, seed=7))

    def test_noiseless_batch_is_exact_gradient(self):
        x = self.p.x_star + 0.5
        noise = make_noise("gaussian", 0.0, 0.0, 4)
        s = batched_stochastic_gradient(self.p, noise, x, 5, np.random.default_rng(0))
        np.testing.assert_array_equal(s.value, self.p.gradient(x))
        assert s.batch_size == 5
        assert s.oracle_calls_consumed == 5

    def test_unbiased_and_batch_variance_shrinks(self):
        x = self.p.x_star + 1.0
        g = self.p.gradient(x)
        sigma, m, reps = 0.8, 16, 4000
        noise = make_noise("gaussian", sigma, 0.0, 4)
        rng = np.random.default_rng(3)
        draws = np.array(
            [batched_stochastic_gradient(self.p, noise, x, m, rng).value for _ in range(reps)]
        )
        err = draws - g
        mean_err = np.linalg.norm(err.mean(axis=0))
        # SE of the mean estimate is sigma / sqrt(m * reps)
        assert mean_err <= 5.0 * sigma / math.sqrt(m * reps)
        second_moment = float((err**2).sum(axis=1).mean())
        assert second_moment == pytest.approx(sigma**2 / m, rel=0.15)

    def test_rejects_empty_batch(self):
        noise = make_noise("gaussian", 1.0, 0.0, 4)
        with pytest.raises(ValueError):
            batched_stochastic_gradient(self.p, noise, self.p.x_star, 0, np.random.default_rng(0))


class TestCertificateProbes:
    def test_quadratic_certificate_and_finite_difference(self):
        p = make_problem(ProblemSpec(kind="quadratic", dim=5, eig_min=0.5, eig_max=4.0, seed=11))
        rng = np.random.default_rng(5)
        res = holder_certificate_check(p, pairs=2000, rng=rng)
        assert isinstance(res, CertificateCheckResult)
        assert res.ok and bool(res)
        assert res.worst_ratio <= res.bound * (1.0 + 1e-9) + 1e-12
        fd = finite_difference_check(p, points=50, rng=rng)
        assert fd.ok
        assert fd.max_rel_err <= 1e-4

    def test_understated_certificate_is_caught(self):
        p = make_problem(ProblemSpec(kind="quadratic", dim=3, eig_min=2.0, eig_max=2.0, seed=0))
        bad = ProblemInstance(
            dim=p.dim,
            objective=p.objective,
            gradient=p.gradient,
            x_star=p.x_star,
            f_star=p.f_star,
            smoothness=HolderSmoothness(nu=1.0, m_nu=p.smoothness.m_nu / 4.0),
            mu=p.mu,
        )
        res = holder_certificate_check(bad, pairs=500, rng=np.random.default_rng(1))
        assert not res.ok
        assert res.worst_pair is not None

    def test_wrong_gradient_fails_finite_difference(self):
        p = make_problem(ProblemSpec(kind="quadratic", dim=3, seed=2))
        broken = ProblemInstance(
            dim=p.dim,
            objective=p.objective,
            gradient=lambda x: 1.5 * p.gradient(x),
            x_star=p.x_star,
            f_star=p.f_star,
            smoothness=p.smoothness,
            mu=p.mu,
        )
        res = finite_difference_check(broken, points=20, rng=np.random.default_rng(3))
        assert not res.ok

    def test_pair_and_point_counts_validated(self):
        p = make_problem(ProblemSpec(kind="quadratic", dim=2, seed=0))
        with pytest.raises(ValueError):
            holder_certificate_check(p, pairs=0, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            finite_difference_check(p, points=0, rng=np.random.default_rng(0))


class TestGradientNormBounds:
    def test_bounded_subgradient_regime_ignores_gap(self):
        assert gradient_norm_bound(12.0, 0.0, 3.5) == 3.5
        assert gradient_norm_bound(0.0, 0.0, 3.5) == 3.5

    def test_smooth_regime_matches_quadratic_identity(self):
        # For f = (M/2) x^2 the gradient norm equals sqrt(2 M gap), and the
        # bound at nu=1 evaluates to exactly that, so the quadratic is the
        # tight case.
        m = 2.7
        for gap in (1e-4, 0.1, 5.0):
            bound = gradient_norm_bound(gap, 1.0, m)
            assert bound == pytest.approx(math.sqrt(2.0 * m * gap), rel=1e-12)

    def test_holds_on_power_norm_instances(self):
        rng = np.random.default_rng(9)
        for nu in (0.0, 0.5, 1.0):
            p = make_problem(ProblemSpec(kind="power_norm", dim=3, scale=1.2, nu=nu))
            s = p.smoothness
            for _ in range(200):
                x = rng.standard_normal(3) * rng.uniform(0.01, 3.0)
                gap = p.gap(x)
                gnorm = float(np.linalg.norm(p.gradient(x)))
                assert gnorm <= gradient_norm_bound(gap, s.nu, s.m_nu) * (1.0 + 1e-9)

    def test_negative_gap_clamped(self):
        assert gradient_norm_bound(-1e-9, 1.0, 1.0) == 0.0


class TestGradientSqBound:
    def test_holds_for_all_smoothing_parameters(self):
        rng = np.random.default_rng(10)
        for nu in (0.0, 0.5, 1.0):
            p = make_problem(ProblemSpec(kind="power_norm", dim=2, scale=0.9, nu=nu))
            s = p.smoothness
            for _ in range(100):
                x = rng.standard_normal(2) * rng.uniform(0.01, 2.0)
                gap = p.gap(x)
                gsq = float(np.dot(p.gradient(x), p.gradient(x)))
                for delta in (1e-3, 1.0, 1e3):
                    assert gsq <= gradient_sq_bound(gap, delta, s.nu, s.m_nu) * (1.0 + 1e-9)

    def test_rejects_nonpositive_delta(self):
        with pytest.raises(ValueError):
            gradient_sq_bound(1.0, 0.0, 0.5, 1.0)


class TestIterateDivergedError:
    def test_carries_iteration_index(self):
        err = IterateDivergedError(17, detail="norm overflow")
        assert err.iteration == 17
        assert "k=17" in str(err)
        assert isinstance(err, RuntimeError)


class TestProblemInstanceValidation:
    def test_rejects_bad_dim_and_mu(self):
        s = HolderSmoothness(nu=1.0, m_nu=1.0)
        with pytest.raises(ValueError):
            ProblemInstance(
                dim=0, objective=lambda x: 0.0, gradient=lambda x: x,
                x_star=np.zeros(0), f_star=0.0, smoothness=s,
            )
        with pytest.raises(ValueError):
            ProblemInstance(
                dim=2, objective=lambda x: 0.0, gradient=lambda x: x,
                x_star=np.zeros(2), f_star=0.0, smoothness=s, mu=-1.0,
            )

    def test_gap_at_minimizer_is_zero(self):
        p = make_problem(ProblemSpec(kind="quadratic", dim=3, seed=4))
        assert p.gap(p.x_star) == pytest.approx(0.0, abs=1e-12)
