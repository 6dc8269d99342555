"""
Shared fixtures: schedules, synthetic specs, the Gaussian oracle and a small
trained network reused by the slow tests.
"""

import numpy as np
import pytest

from ensdiff.core.config import TrainConfig
from ensdiff.core.enums import CovarianceKind
from ensdiff.core.schedule import make_schedule
from ensdiff.services.synthdata import FieldSpec, make_dataset, oracle_for_spec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def oracle_schedule():
    return make_schedule(256, 0.02, 0.995, 1.0)


@pytest.fixture(scope="session")
def diagonal_spec():
    return FieldSpec(
        height=16, width=16, kind=CovarianceKind.DIAGONAL_PROFILE,
        mean_level=1.0, mean_amplitude=0.5, variance_low=0.5, variance_high=2.0,
    )


@pytest.fixture(scope="session")
def oracle(diagonal_spec, oracle_schedule):
    return oracle_for_spec(diagonal_spec, oracle_schedule)


@pytest.fixture(scope="session")
def smooth_spec():
    return FieldSpec(height=16, width=16, kind=CovarianceKind.SMOOTHED_SPECTRAL, length_scale=3.0)


@pytest.fixture(scope="session")
def train_dataset(smooth_spec):
    return make_dataset(smooth_spec, samples=256, factor=4, seed=7)


@pytest.fixture(scope="session")
def test_dataset(smooth_spec):
    return make_dataset(smooth_spec, samples=32, factor=4, seed=8)


@pytest.fixture(scope="session")
def trained_denoiser(train_dataset):
    """ToyDenoiser trained on the smoothed-spectral task (lambda = 3)."""
    from ensdiff.models.network import ToyDenoiser
    from ensdiff.models.training import train

    cfg = TrainConfig(epochs=200, batch_size=16, seed=3)
    schedule = make_schedule(256, 0.02, 0.995, 3.0)
    net = ToyDenoiser.create(train_dataset.hi, train_dataset.lo, schedule, cfg)
    result = train(net, train_dataset.hi, train_dataset.lo, cfg)
    return net, result
