import pytest
from hypothesis import given, settings, strategies as st

from ensdiff.core.config import ExperimentConfig, PathsConfig, RuntimeSettings, SamplerSettings, ScheduleConfig, TrainConfig
from ensdiff.core.exceptions import ConfigurationError


def test_defaults_serialize_sorted():
    text = ExperimentConfig().serialize()
    lines = text.strip().splitlines()
    assert lines == sorted(lines)
    assert "schedule.T=256" in lines
    assert "schedule.lambda=3.0" in lines
    assert "sampler.delta_t=32" in lines


def test_parse_accepts_partial_text_and_comments():
    config = ExperimentConfig.parse("# run\nschedule.T=128\nschedule.lambda=1\n\nsampler.members=4\n")
    assert config.schedule.T == 128
    assert config.schedule.lambda_ == 1.0
    assert config.sampler.members == 4
    assert config.train == TrainConfig()


def test_serialize_is_canonical_and_idempotent():
    text = "sampler.seed=9\nschedule.lambda=2\nschedule.sr_min=0.010\n"
    once = ExperimentConfig.parse(text).serialize()
    assert ExperimentConfig.parse(once).serialize() == once
    assert "schedule.sr_min=0.01" in once


@pytest.mark.parametrize("text", [
    "schedule.unknown=1",
    "nosection=1",
    "schedule.T=zero",
    "schedule.T=0",
    "schedule.sr_min=0.9\nschedule.sr_max=0.5",
    "just words",
])
def test_invalid_text(text):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.parse(text)


@given(
    T=st.integers(1, 10_000),
    sr_min=st.floats(0.001, 0.4),
    sr_max=st.floats(0.5, 0.999),
    lam=st.floats(1.0, 10.0),
    delta_t=st.integers(1, 512),
    members=st.integers(1, 64),
    seed=st.integers(0, 2 ** 31),
    data_dir=st.text(alphabet="abcdefghij/_-.", max_size=20),
)
@settings(max_examples=100, deadline=None)
def test_round_trip(T, sr_min, sr_max, lam, delta_t, members, seed, data_dir):
    config = ExperimentConfig(
        schedule=ScheduleConfig(T=T, sr_min=sr_min, sr_max=sr_max, lambda_=lam),
        sampler=SamplerSettings(delta_t=delta_t, members=members, seed=seed),
        paths=PathsConfig(data_dir=data_dir),
    )
    assert ExperimentConfig.parse(config.serialize()) == config


def test_runtime_settings_from_environment(monkeypatch):
    monkeypatch.setenv("ENSDIFF_THREADS", "4")
    monkeypatch.setenv("ENSDIFF_LOG_LEVEL", "DEBUG")
    settings_ = RuntimeSettings()
    assert settings_.threads == 4
    assert settings_.log_level == "DEBUG"
