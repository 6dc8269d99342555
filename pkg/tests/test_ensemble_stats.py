import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ensdiff.core.enums import Season
from ensdiff.core.exceptions import ParameterError, ShapeError
from ensdiff.services.ensemble_stats import (
    EnsembleSet, global_mean_variance, mean_ssim, mse, mvd, pixelwise_variance, point_series,
    seasonal_ensemble_mean_mse, spatial_mean_variance, ssim, summarize, yearly_mean_variance,
)

SEASONS = tuple(Season.for_index(i) for i in range(8))


@pytest.fixture
def ensemble(rng):
    return EnsembleSet(rng.normal(2.0, 1.5, size=(8, 10, 16, 16)), SEASONS)


def _gaussian_taps(sigma=1.5, radius=5):
    taps = [math.exp(-(k * k) / (2.0 * sigma * sigma)) for k in range(-radius, radius + 1)]
    total = sum(taps)
    return [w / total for w in taps]


def _reference_ssim(a, b, value_range):
    """Valid-window SSIM with an 11x11 normalized Gaussian window."""
    taps = _gaussian_taps()
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2
    h, w = a.shape
    scores = []
    for i in range(5, h - 5):
        for j in range(5, w - 5):
            mx = my = sxx = syy = sxy = 0.0
            for di in range(-5, 6):
                for dj in range(-5, 6):
                    weight = taps[di + 5] * taps[dj + 5]
                    x = a[i + di, j + dj]
                    y = b[i + di, j + dj]
                    mx += weight * x
                    my += weight * y
                    sxx += weight * x * x
                    syy += weight * y * y
                    sxy += weight * x * y
            vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
            scores.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(scores) / len(scores)


class TestEnsembleSet:
    def test_rejects_bad_rank(self):
        with pytest.raises(ShapeError):
            EnsembleSet(np.zeros((3, 4, 4)))

    def test_rejects_label_count(self):
        with pytest.raises(ShapeError):
            EnsembleSet(np.zeros((3, 2, 4, 4)), SEASONS[:2])

    def test_resized_is_bilinear_per_member(self, ensemble):
        small = ensemble.resized(4, 4)
        assert small.field_shape == (4, 4)
        assert small.seasons == ensemble.seasons
        assert ensemble.resized(16, 16) is ensemble


class TestVarianceMetrics:
    def test_pixelwise_variance_matches_triple_loop(self, ensemble):
        V = pixelwise_variance(ensemble)
        values = ensemble.values
        for s in range(8):
            for y in range(0, 16, 3):
                for x in range(0, 16, 3):
                    members = [values[s, m, y, x] for m in range(10)]
                    mean = sum(members) / 10
                    assert V[s, y, x] == pytest.approx(sum((v - mean) ** 2 for v in members) / 10, abs=1e-12)

    def test_global_mean_variance_matches_flat_loop(self, ensemble):
        V = pixelwise_variance(ensemble)
        flat = [float(v) for v in V.ravel()]
        assert global_mean_variance(V) == pytest.approx(sum(flat) / len(flat), abs=1e-12)

    def test_spatial_mean_variance_matches_loop(self, ensemble):
        V = pixelwise_variance(ensemble)
        maps = spatial_mean_variance(V, SEASONS)
        assert list(maps) == list(Season.ordered())
        for season, m in maps.items():
            idx = [i for i, label in enumerate(SEASONS) if label is season]
            assert len(idx) == 2
            for y in range(16):
                for x in range(16):
                    assert m[y, x] == pytest.approx((V[idx[0], y, x] + V[idx[1], y, x]) / 2, abs=1e-12)

    def test_balanced_seasons_average_to_global_mean(self, ensemble):
        V = pixelwise_variance(ensemble)
        seasonal = [float(np.mean(m)) for m in spatial_mean_variance(V, SEASONS).values()]
        assert sum(seasonal) / 4 == pytest.approx(global_mean_variance(V), abs=1e-12)
        assert float(np.mean(yearly_mean_variance(V))) == pytest.approx(global_mean_variance(V), abs=1e-12)

    def test_requested_season_without_samples(self, ensemble):
        V = pixelwise_variance(ensemble)
        only_winter = (Season.JFM,) * 8
        with pytest.raises(ParameterError):
            spatial_mean_variance(V, only_winter, [Season.JAS])

    def test_translation_invariance_and_scaling(self, ensemble, rng):
        V = pixelwise_variance(ensemble)
        shift = rng.normal(size=(8, 1, 16, 16))
        np.testing.assert_allclose(pixelwise_variance(EnsembleSet(ensemble.values + shift)), V, atol=1e-10)
        np.testing.assert_allclose(pixelwise_variance(EnsembleSet(-3.0 * ensemble.values)), 9.0 * V, rtol=1e-12)

    def test_single_member_has_no_variance(self):
        with pytest.raises(ParameterError):
            pixelwise_variance(EnsembleSet(np.zeros((2, 1, 4, 4))))


maps = arrays(np.float64, (4, 4), elements=st.floats(0.0, 10.0))


class TestMvd:
    def test_matches_loop(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        expected = sum(abs(a[i, j] - b[i, j]) for i in range(16) for j in range(16)) / 256
        assert mvd(a, b) == pytest.approx(expected, abs=1e-12)

    @given(a=maps, b=maps, c=maps)
    @settings(max_examples=200, deadline=None)
    def test_metric_axioms(self, a, b, c):
        assert mvd(a, a) == 0.0
        assert mvd(a, b) >= 0.0
        assert mvd(a, b) == mvd(b, a)
        assert mvd(a, c) <= mvd(a, b) + mvd(b, c) + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mvd(np.zeros((2, 2)), np.zeros((3, 3)))


class TestMseSsim:
    def test_mse_matches_loop(self, rng):
        a = rng.normal(size=(5, 6))
        b = rng.normal(size=(5, 6))
        expected = sum((a[i, j] - b[i, j]) ** 2 for i in range(5) for j in range(6)) / 30
        assert mse(a, b) == pytest.approx(expected, abs=1e-12)

    def test_identical_fields(self, rng):
        a = rng.normal(size=(16, 16))
        assert mse(a, a) == 0.0
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_ssim_matches_reference_implementation(self, rng):
        b = rng.normal(size=(16, 16))
        a = b + 0.3 * rng.normal(size=(16, 16))
        value_range = float(b.max() - b.min())
        assert ssim(a, b) == pytest.approx(_reference_ssim(a, b, value_range), abs=1e-6)

    def test_ssim_needs_dynamic_range(self):
        with pytest.raises(ParameterError):
            ssim(np.ones((16, 16)), np.ones((16, 16)))

    def test_ssim_needs_room_for_the_window(self, rng):
        with pytest.raises(ShapeError):
            ssim(rng.normal(size=(6, 6)), rng.normal(size=(6, 6)))

    def test_mean_ssim_averages_samples(self, rng):
        refs = rng.normal(size=(3, 16, 16))
        preds = refs + 0.1 * rng.normal(size=(3, 16, 16))
        value_range = float(refs.max() - refs.min())
        expected = np.mean([ssim(p, r, value_range) for p, r in zip(preds, refs)])
        assert mean_ssim(preds, refs) == pytest.approx(expected, abs=1e-15)


class TestSummaries:
    def test_seasonal_mse(self, ensemble, rng):
        truth = rng.normal(size=(8, 16, 16))
        result = seasonal_ensemble_mean_mse(ensemble, truth, SEASONS)
        assert set(result) == {"all", "JFM", "AMJ", "JAS", "OND"}
        assert result["all"] == pytest.approx(np.mean([result[s.value] for s in Season.ordered()]), rel=1e-12)

    def test_summarize_columns(self, ensemble, rng):
        truth = rng.normal(size=(8, 16, 16))
        row = summarize(ensemble, 8, reference=ensemble, truth=truth)
        assert list(row) == [
            "N_steps", "mu_V", "MVD_yearly", "MVD_JFM", "MVD_AMJ", "MVD_JAS", "MVD_OND", "MSE", "SSIM",
        ]
        assert row["MVD_yearly"] == 0.0
        assert row["MVD_OND"] == 0.0
        assert row["mu_V"] == pytest.approx(global_mean_variance(pixelwise_variance(ensemble)))

    def test_summarize_without_comparisons(self, ensemble):
        row = summarize(ensemble, 4)
        assert math.isnan(row["MVD_yearly"]) and math.isnan(row["MSE"])

    def test_point_series(self, ensemble):
        frame = point_series(ensemble, x=3, y=5, window=2)
        assert len(frame) == 8
        np.testing.assert_allclose(frame["mean"], ensemble.values[:, :, 5, 3].mean(axis=1))
        assert frame["mean_smoothed"].iloc[1] == pytest.approx(frame["mean"].iloc[:2].mean())
        assert np.all(frame["upper"] >= frame["lower"])

    def test_point_outside_grid(self, ensemble):
        with pytest.raises(ParameterError):
            point_series(ensemble, x=16, y=0)
