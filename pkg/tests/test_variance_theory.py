import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensdiff.core.enums import VarianceClosure
from ensdiff.core.exceptions import ParameterError, ShapeError
from ensdiff.core.interfaces import Denoiser
from ensdiff.core.schedule import step_coefficient, time_grid
from ensdiff.models.oracle import GaussianOracle, ZeroDenoiser
from ensdiff.services.sampler import SamplerConfig, generate_ensemble
from ensdiff.services.variance_theory import (
    elementwise_covariance, elementwise_variance, mean_trajectory, predict_variance_closed, predict_variance_recursive,
)


class _Linear(Denoiser):
    """eps_hat = k x with no analytic Jacobian."""

    def __init__(self, k, shape, schedule):
        self.k = k
        self._shape = shape
        self.schedule = schedule

    @property
    def field_shape(self):
        return self._shape

    def predict(self, x_t, t, cond=None):
        return self.k * np.asarray(x_t, dtype=np.float64)


class TestElementwiseVariance:
    def test_two_point_hand_value(self):
        assert elementwise_variance([np.array([0.0]), np.array([2.0])])[0] == 1.0

    def test_matches_two_loop_oracle(self, rng):
        samples = [rng.normal(size=6) for _ in range(5)]
        v = elementwise_variance(samples)
        for i in range(6):
            mean = sum(s[i] for s in samples) / 5
            expected = sum((s[i] - mean) ** 2 for s in samples) / 5
            assert v[i] == pytest.approx(expected, abs=1e-12)

    def test_needs_two_samples(self):
        with pytest.raises(ParameterError):
            elementwise_variance([np.zeros(3)])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise_variance([np.zeros(3), np.zeros(4)])

    @given(a=st.floats(-20, 20), seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 12))
    @settings(max_examples=1000, deadline=None)
    def test_scaling_law(self, a, seed, n):
        samples = np.random.default_rng(seed).normal(size=(n, 5))
        scaled = elementwise_variance(a * samples)
        np.testing.assert_allclose(scaled, a * a * elementwise_variance(samples), rtol=1e-10, atol=1e-10)

    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 50))
    @settings(max_examples=1000, deadline=None)
    def test_variance_of_sum_decomposes(self, seed, n):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 4))
        y = rng.normal(2.0, 3.0, size=(n, 4))
        lhs = elementwise_variance(x + y)
        rhs = elementwise_variance(x) + elementwise_variance(y) + 2.0 * elementwise_covariance(x, y)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


class TestMeanTrajectory:
    def test_zero_denoiser_stays_at_zero(self, oracle_schedule):
        trajectory = mean_trajectory(ZeroDenoiser((4, 4), oracle_schedule), oracle_schedule, 32)
        assert len(trajectory) == 9
        for m in trajectory:
            np.testing.assert_array_equal(m, 0.0)

    def test_centered_oracle_stays_at_zero(self, oracle_schedule):
        o = GaussianOracle(np.zeros((4, 4)), np.full((4, 4), 1.5), oracle_schedule)
        for m in mean_trajectory(o, oracle_schedule, 16):
            np.testing.assert_array_equal(m, 0.0)

    def test_reaches_data_mean(self, oracle, oracle_schedule):
        m_T = mean_trajectory(oracle, oracle_schedule, 4)[-1]
        np.testing.assert_allclose(m_T, oracle.mu, rtol=0.05)


class TestPredictVariance:
    def test_zero_denoiser_closed_sum(self, oracle_schedule):
        s = oracle_schedule
        delta_t = 32
        d = ZeroDenoiser((3, 3), s)
        ratios = [s.sr[t] / s.sr[t - delta_t] for t in range(delta_t, s.T + 1, delta_t)]
        coeffs = [step_coefficient(s, t, delta_t) for t in range(delta_t, s.T + 1, delta_t)]
        expected = 1.0
        for r in ratios:
            expected *= r * r
        for i, c in enumerate(coeffs):
            tail = 1.0
            for r in ratios[i + 1:]:
                tail *= r * r
            expected += tail * c * c
        v_T = predict_variance_closed(d, s, delta_t).v_T
        np.testing.assert_allclose(v_T, expected, rtol=1e-12)

    def test_single_step_hand_formula(self, oracle, oracle_schedule):
        s = oracle_schedule
        r = s.sr[s.T] / s.sr[0]
        c = s.nr[s.T] - s.sr[s.T] * s.nr[0] / s.sr[0]
        J = s.nr[0] / (s.sr[0] ** 2 * oracle.sigma_diag + s.nr[0] ** 2)
        prediction = predict_variance_closed(oracle, s, s.T)
        expected = np.maximum(r * r + 2.0 * r * c * J + c * c, 0.0)
        np.testing.assert_allclose(prediction.v_T, expected, rtol=1e-10, atol=1e-10)
        assert prediction.steps == 1

    @pytest.mark.parametrize("delta_t", [256, 64, 16, 4, 1])
    def test_closed_formula_unrolls_the_recursion(self, oracle, oracle_schedule, delta_t):
        closed = predict_variance_closed(oracle, oracle_schedule, delta_t, closure=VarianceClosure.LINEARIZED)
        recursive = predict_variance_recursive(oracle, oracle_schedule, delta_t, closure=VarianceClosure.LINEARIZED)
        np.testing.assert_allclose(closed.v_T, recursive.v_T, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("delta_t", [64, 8])
    def test_closed_formula_unrolls_the_unit_recursion(self, oracle_schedule, delta_t):
        d = _Linear(0.3, (4, 4), oracle_schedule)
        closed = predict_variance_closed(d, oracle_schedule, delta_t)
        recursive = predict_variance_recursive(d, oracle_schedule, delta_t)
        assert recursive.clamp_count == 0
        np.testing.assert_allclose(closed.v_T, recursive.v_T, rtol=1e-9, atol=1e-9)

    def test_recursion_keeps_checkpoints_per_grid_point(self, oracle, oracle_schedule):
        prediction = predict_variance_recursive(oracle, oracle_schedule, 64)
        assert sorted(prediction.checkpoints) == list(time_grid(256, 64).points)
        np.testing.assert_array_equal(prediction.checkpoints[0], 1.0)
        assert prediction.closure is VarianceClosure.UNIT
        assert prediction.output_scale == 1.0

    def test_negative_variance_is_clamped_and_counted(self, oracle_schedule):
        d = _Linear(50.0, (4, 4), oracle_schedule)
        prediction = predict_variance_recursive(d, oracle_schedule, oracle_schedule.T)
        assert prediction.clamp_count == 16
        np.testing.assert_array_equal(prediction.v_T, 0.0)

    def test_linearized_prediction_grows_with_steps(self, oracle, oracle_schedule):
        means = [
            float(np.mean(predict_variance_closed(
                oracle, oracle_schedule, 256 // n, closure=VarianceClosure.LINEARIZED
            ).v_T))
            for n in (1, 2, 4, 8, 16, 32, 64, 128)
        ]
        assert all(b >= a for a, b in zip(means, means[1:]))
        assert abs(means[-1] - means[-2]) / means[-2] < 0.05

    def test_non_divisor_step(self, oracle, oracle_schedule):
        with pytest.raises(ParameterError):
            predict_variance_closed(oracle, oracle_schedule, 7)

    @pytest.mark.slow
    @pytest.mark.parametrize("steps", [1, 2, 4, 8, 16])
    def test_prediction_matches_monte_carlo_ensemble(self, oracle, oracle_schedule, steps):
        delta_t = oracle_schedule.T // steps
        prediction = predict_variance_closed(oracle, oracle_schedule, delta_t, closure=VarianceClosure.LINEARIZED)
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=delta_t, members=4096, base_seed=steps)
        empirical = generate_ensemble(oracle, cfg).var(axis=0)
        predicted = prediction.data_scale()
        assert abs(predicted.mean() / empirical.mean() - 1.0) < 0.10
        assert np.mean(np.abs(predicted / empirical - 1.0) < 0.15) >= 0.95

    @pytest.mark.slow
    def test_empirical_variance_grows_with_steps(self, oracle, oracle_schedule):
        members = 4096
        mu_v, se = [], []
        for n in (1, 2, 4, 8, 16, 32):
            cfg = SamplerConfig(schedule=oracle_schedule, delta_t=256 // n, members=members, base_seed=100 + n)
            var = generate_ensemble(oracle, cfg).var(axis=0)
            mu_v.append(float(var.mean()))
            se.append(float(var.mean()) * np.sqrt(2.0 / members))
        for i in range(len(mu_v) - 1):
            assert mu_v[i + 1] >= mu_v[i] - 3.0 * np.hypot(se[i], se[i + 1])

    @pytest.mark.slow
    @pytest.mark.parametrize("steps", [64, 128])
    def test_unit_closure_matches_fine_step_ensembles(self, oracle, oracle_schedule, steps):
        delta_t = oracle_schedule.T // steps
        prediction = predict_variance_closed(oracle, oracle_schedule, delta_t, closure=VarianceClosure.UNIT)
        assert prediction.clamp_count == 0
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=delta_t, members=4096, base_seed=200 + steps)
        empirical = generate_ensemble(oracle, cfg).var(axis=0)
        predicted = prediction.data_scale()
        assert abs(predicted.mean() / empirical.mean() - 1.0) < 0.10
        assert np.mean(np.abs(predicted / empirical - 1.0) < 0.15) >= 0.95

    @pytest.mark.slow
    def test_empirical_variance_plateaus(self, oracle, oracle_schedule):
        members = 1024
        mu_v = {}
        for n in (64, 128):
            cfg = SamplerConfig(schedule=oracle_schedule, delta_t=256 // n, members=members, base_seed=300)
            mu_v[n] = float(generate_ensemble(oracle, cfg).var(axis=0).mean())
        assert abs(mu_v[128] - mu_v[64]) / mu_v[64] < 0.05
        assert mu_v[128] >= mu_v[64] * (1.0 - 3.0 * np.sqrt(2.0 / members))
