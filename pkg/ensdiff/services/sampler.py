"""
DDIM reverse process with step skipping and seeded ensemble generation.

Generation starts from x_0 ~ N(0, I) on the model grid and applies
x_t = (sr[t] / sr[t-dt]) x_{t-dt} + c_{t-dt} eps_hat(x_{t-dt}, t-dt, cond)
until t = T. The model works on standardized fields divided by lambda, so the
result is multiplied by lambda, de-standardized and cropped.

Member j of sample i draws its starting noise from the stream
SeedSequence([base_seed, i, j]); ensembles are evaluated as one batch of M
members, so outputs never depend on how samples are spread over workers.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
import structlog

from ..core.exceptions import NumericalError, ParameterError
from ..core.fields import crop
from ..core.interfaces import Denoiser
from ..core.schedule import Schedule, step_coefficient, time_grid
from .concurrency_manager import ConcurrencyManager

logger = structlog.get_logger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class SamplerConfig:
    """Reverse-process configuration for one conditioning sample."""
    schedule: Schedule
    delta_t: int
    members: int = 10
    base_seed: int = 0
    conditioning: Optional[np.ndarray] = None
    sample_index: int = 0
    final_projection: bool = False

    def __post_init__(self) -> None:
        time_grid(self.schedule.T, self.delta_t)
        if self.members < 1:
            raise ParameterError(f"ensemble needs at least one member, got {self.members}")

    @property
    def steps(self) -> int:
        return self.schedule.T // self.delta_t


def member_stream(base_seed: int, sample_index: int, member_index: int) -> np.random.Generator:
    """Independent generator for one ensemble member."""
    return np.random.default_rng(np.random.SeedSequence([base_seed, sample_index, member_index]))


def ddim_step(
    x_prev: np.ndarray, t: int, delta_t: int, d: Denoiser, s: Schedule, cond: Optional[np.ndarray] = None,
) -> np.ndarray:
    """One deterministic DDIM update from t - delta_t to t."""
    c = step_coefficient(s, t, delta_t)
    eps = np.asarray(d.predict(x_prev, t - delta_t, cond), dtype=np.float64)
    if not np.all(np.isfinite(eps)):
        raise NumericalError(f"denoiser returned non-finite noise at t={t - delta_t}", details={"step": t})
    return s.signal_ratio(t, delta_t) * x_prev + c * eps


def _check_divergence(x: np.ndarray, t: int) -> None:
    magnitude = np.abs(x).reshape(x.shape[0], -1)
    bad = ~np.all(np.isfinite(magnitude) & (magnitude <= DIVERGENCE_LIMIT), axis=1)
    if bad.any():
        member = int(np.argmax(bad))
        raise NumericalError(
            f"reverse process diverged at step t={t} (member {member}); |x| exceeded {DIVERGENCE_LIMIT:g}",
            details={"step": t, "member": member},
        )


def run_reverse_process(d: Denoiser, cfg: SamplerConfig, x0: np.ndarray, cond: Optional[np.ndarray]) -> np.ndarray:
    """Iterate DDIM steps over the time grid on a batch; returns model-scale x_T."""
    s = cfg.schedule
    x = np.asarray(x0, dtype=np.float64)
    for t in time_grid(s.T, cfg.delta_t).steps():
        x = ddim_step(x, t, cfg.delta_t, d, s, cond)
        _check_divergence(x, t)
    if cfg.final_projection:
        eps = np.asarray(d.predict(x, s.T, cond), dtype=np.float64)
        x = (x - s.nr[s.T] * eps) / s.sr[s.T]
    return x


def to_data_scale(d: Denoiser, x: np.ndarray) -> np.ndarray:
    """Multiply by lambda, invert the target standardizer and crop padding."""
    scaled = np.asarray(x, dtype=np.float64) * d.schedule.lambda_
    if d.target_standardizer is not None:
        scaled = d.target_standardizer.invert(scaled)
    return crop(scaled, *d.field_shape)


def generate(d: Denoiser, cfg: SamplerConfig, seed: int) -> np.ndarray:
    """A single field; uses the stream of member 0 of the configured sample."""
    cond = d.prepare_conditioning(cfg.conditioning)
    x0 = member_stream(seed, cfg.sample_index, 0).standard_normal(d.grid_shape)
    return to_data_scale(d, run_reverse_process(d, cfg, x0[None], cond))[0]


def generate_ensemble(d: Denoiser, cfg: SamplerConfig) -> np.ndarray:
    """(M, h, w) ensemble for the configured conditioning sample."""
    cond = d.prepare_conditioning(cfg.conditioning)
    x0 = np.stack([
        member_stream(cfg.base_seed, cfg.sample_index, j).standard_normal(d.grid_shape)
        for j in range(cfg.members)
    ])
    members = to_data_scale(d, run_reverse_process(d, cfg, x0, cond))
    logger.debug("ensemble_generated", sample=cfg.sample_index, members=cfg.members, steps=cfg.steps)
    return members


def generate_ensemble_set(
    d: Denoiser,
    cfg: SamplerConfig,
    conditionings: Sequence[Optional[np.ndarray]],
    pool: Optional[ConcurrencyManager] = None,
) -> np.ndarray:
    """(S, M, h, w) ensembles, sample i conditioned on conditionings[i]."""
    if len(conditionings) == 0:
        raise ParameterError("need at least one conditioning sample")
    configs: List[SamplerConfig] = [
        replace(cfg, conditioning=cond, sample_index=i) for i, cond in enumerate(conditionings)
    ]
    pool = pool or ConcurrencyManager(1)
    ensembles = pool.map_ordered(lambda c: generate_ensemble(d, c), configs)
    logger.info("ensemble_set_generated", samples=len(configs), members=cfg.members, steps=cfg.steps)
    return np.stack(ensembles)
