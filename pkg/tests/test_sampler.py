from dataclasses import replace

import numpy as np
import pytest

from ensdiff.core.exceptions import NumericalError, ParameterError
from ensdiff.core.fields import Standardizer
from ensdiff.core.interfaces import Denoiser
from ensdiff.core.schedule import make_schedule
from ensdiff.models.oracle import ZeroDenoiser
from ensdiff.services.concurrency_manager import ConcurrencyManager
from ensdiff.services.sampler import (
    SamplerConfig, ddim_step, generate, generate_ensemble, generate_ensemble_set, member_stream, to_data_scale,
)
from ensdiff.services.variance_theory import mean_trajectory


class _KnownSignal(Denoiser):
    """Returns the exact noise of x_t = sr[t] x0 + nr[t] eps for a fixed x0."""

    def __init__(self, x0, schedule):
        self.x0 = x0
        self.schedule = schedule

    @property
    def field_shape(self):
        return self.x0.shape

    def predict(self, x_t, t, cond=None):
        return (x_t - self.schedule.sr[t] * self.x0) / self.schedule.nr[t]


class _Explosive(ZeroDenoiser):
    def predict(self, x_t, t, cond=None):
        return 1e8 * np.asarray(x_t)


class _Padded(ZeroDenoiser):
    target_standardizer = Standardizer(mean=2.0, std=0.5)

    @property
    def grid_shape(self):
        return (4, 4)


class TestDdimStep:
    def test_exact_noise_keeps_trajectory_on_the_forward_path(self, oracle_schedule):
        s = oracle_schedule
        rng = np.random.default_rng(11)
        for _ in range(100):
            x0 = rng.normal(size=(4, 4))
            eps = rng.normal(size=(4, 4))
            t = int(rng.integers(1, s.T + 1))
            delta_t = int(rng.integers(1, t + 1))
            prev = t - delta_t
            x_prev = s.sr[prev] * x0 + s.nr[prev] * eps
            x_t = ddim_step(x_prev, t, delta_t, _KnownSignal(x0, s), s)
            np.testing.assert_allclose(x_t, s.sr[t] * x0 + s.nr[t] * eps, rtol=0, atol=1e-10)

    def test_zero_noise_prediction_only_rescales(self, oracle_schedule, rng):
        x = rng.normal(size=(3, 3))
        out = ddim_step(x, 64, 32, ZeroDenoiser((3, 3), oracle_schedule), oracle_schedule)
        np.testing.assert_allclose(out, x * oracle_schedule.sr[64] / oracle_schedule.sr[32], rtol=1e-14)

    def test_single_oracle_step_against_hand_evaluation(self, oracle, oracle_schedule, rng):
        s = oracle_schedule
        x = rng.normal(size=(16, 16))
        t, delta_t = 96, 32
        sr_t, nr_t, sr_p, nr_p = s.sr[t], s.nr[t], s.sr[t - delta_t], s.nr[t - delta_t]
        gain = nr_p / (sr_p ** 2 * oracle.sigma_diag + nr_p ** 2)
        expected = (sr_t / sr_p) * x + (nr_t - sr_t * nr_p / sr_p) * gain * (x - sr_p * oracle.mu)
        np.testing.assert_allclose(ddim_step(x, t, delta_t, oracle, s), expected, rtol=1e-12, atol=1e-12)


class TestSamplerConfig:
    def test_rejects_non_divisor_step(self, oracle_schedule):
        with pytest.raises(ParameterError, match="divide"):
            SamplerConfig(schedule=oracle_schedule, delta_t=7)

    def test_rejects_empty_ensemble(self, oracle_schedule):
        with pytest.raises(ParameterError):
            SamplerConfig(schedule=oracle_schedule, delta_t=32, members=0)

    def test_steps(self, oracle_schedule):
        assert SamplerConfig(schedule=oracle_schedule, delta_t=32).steps == 8


class TestGeneration:
    def test_member_streams_are_independent_of_each_other(self):
        a = member_stream(0, 0, 0).standard_normal(8)
        b = member_stream(0, 0, 1).standard_normal(8)
        c = member_stream(0, 1, 0).standard_normal(8)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)
        np.testing.assert_array_equal(a, member_stream(0, 0, 0).standard_normal(8))

    def test_deterministic_for_fixed_seed(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=32, members=6, base_seed=4)
        np.testing.assert_array_equal(generate_ensemble(oracle, cfg), generate_ensemble(oracle, cfg))

    def test_different_seeds_differ(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=32, members=3, base_seed=4)
        other = replace(cfg, base_seed=5)
        assert not np.array_equal(generate_ensemble(oracle, cfg), generate_ensemble(oracle, other))

    def test_single_member(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=64, members=1)
        out = generate_ensemble(oracle, cfg)
        assert out.shape == (1, 16, 16)
        assert np.all(np.isfinite(out))

    def test_generate_uses_member_zero(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=32, members=5, sample_index=2)
        single = generate(oracle, cfg, seed=9)
        ensemble = generate_ensemble(oracle, replace(cfg, base_seed=9))
        np.testing.assert_array_equal(single, ensemble[0])

    def test_thread_count_does_not_change_output(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=32, members=4, base_seed=1)
        conditionings = [None] * 6
        serial = generate_ensemble_set(oracle, cfg, conditionings)
        with ConcurrencyManager(max_workers=4) as pool:
            threaded = generate_ensemble_set(oracle, cfg, conditionings, pool)
        assert serial.shape == (6, 4, 16, 16)
        np.testing.assert_array_equal(serial, threaded)
        assert not np.array_equal(serial[0], serial[1])

    def test_empty_conditioning_list(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=32)
        with pytest.raises(ParameterError):
            generate_ensemble_set(oracle, cfg, [])

    def test_divergence_names_step_and_member(self, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=32, members=2)
        with pytest.raises(NumericalError) as info:
            generate_ensemble(_Explosive((4, 4), oracle_schedule), cfg)
        assert info.value.details["step"] == 32
        assert "member" in info.value.details

    def test_output_is_rescaled_destandardized_and_cropped(self):
        d = _Padded((3, 3), make_schedule(16, 0.02, 0.995, 3.0))
        x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        out = to_data_scale(d, x)
        assert out.shape == (1, 3, 3)
        np.testing.assert_allclose(out, 3.0 * x[:, :3, :3] * 0.5 + 2.0)

    def test_final_projection_changes_output(self, oracle, oracle_schedule):
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=64, members=2)
        plain = generate_ensemble(oracle, cfg)
        projected = generate_ensemble(oracle, replace(cfg, final_projection=True))
        assert not np.array_equal(plain, projected)
        assert np.all(np.isfinite(projected))

    @pytest.mark.slow
    def test_full_step_ensemble_recovers_oracle_moments(self, oracle, oracle_schedule):
        members = 4096
        cfg = SamplerConfig(schedule=oracle_schedule, delta_t=1, members=members, base_seed=21)
        ensemble = generate_ensemble(oracle, cfg)
        mean = ensemble.mean(axis=0)
        var = ensemble.var(axis=0)
        m_T = mean_trajectory(oracle, oracle_schedule, 1)[-1]
        se = ensemble.std(axis=0) / np.sqrt(members)
        assert np.mean(np.abs(mean - m_T) < 3.0 * se) >= 0.95
        np.testing.assert_allclose(m_T, oracle.mu, rtol=0.05)
        rel = np.abs(var / oracle.sigma_diag - 1.0)
        assert np.mean(rel < 0.10) >= 0.95
        assert np.median(rel) < 0.05
