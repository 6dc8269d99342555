"""
Diffusion time grid, signal/noise rate tables and the DDIM step coefficient.

Time runs from noise (t = 0) to data (t = T). The signal rate follows a
quarter-period sine between the clamped endpoints, so ``sr[t]`` increases and
``nr[t]`` decreases with t.
"""

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import structlog

from .config import ScheduleConfig
from .exceptions import ParameterError, RangeError

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class Schedule:
    """Precomputed signal/noise rate tables for t = 0..T."""
    T: int
    sr_min: float
    sr_max: float
    lambda_: float
    sr: np.ndarray = field(repr=False)
    nr: np.ndarray = field(repr=False)

    def alpha(self, t: int) -> float:
        self._check_index(t)
        return float(self.sr[t] ** 2)

    def signal_ratio(self, t: int, delta_t: int) -> float:
        """sqrt(alpha_t / alpha_{t-dt}) evaluated from the tables."""
        self._check_step(t, delta_t)
        return float(self.sr[t] / self.sr[t - delta_t])

    def scaled_signal_rates(self) -> np.ndarray:
        """Effective signal rate of the unscaled data when the model works on x / lambda."""
        return self.sr / self.lambda_

    def to_config(self) -> ScheduleConfig:
        return ScheduleConfig(T=self.T, sr_min=self.sr_min, sr_max=self.sr_max, lambda_=self.lambda_)

    def _check_index(self, t: int) -> None:
        if t < 0 or t > self.T:
            raise RangeError(f"time index {t} outside [0, {self.T}]", details={"t": t})

    def _check_step(self, t: int, delta_t: int) -> None:
        if delta_t < 0:
            raise ParameterError(f"delta_t must be non-negative, got {delta_t}")
        self._check_index(t)
        if t - delta_t < 0:
            raise RangeError(
                f"step from t={t - delta_t} to t={t} starts before 0; need delta_t <= t",
                details={"t": t, "delta_t": delta_t},
            )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform subdivision of [0, T] with step delta_t."""
    delta_t: int
    points: Tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.points) - 1

    @property
    def T(self) -> int:
        return self.points[-1]

    def steps(self) -> Tuple[int, ...]:
        """Target time of every reverse step (delta_t, 2 delta_t, ..., T)."""
        return self.points[1:]


def make_schedule(T: int, sr_min: float = 0.02, sr_max: float = 0.995, lambda_: float = 1.0) -> Schedule:
    """Build the clamped sine schedule."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ParameterError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < sr_min < sr_max < 1.0):
        raise ParameterError(
            f"signal-rate clamps must satisfy 0 < sr_min < sr_max < 1, got sr_min={sr_min}, sr_max={sr_max}"
        )
    if lambda_ < 1.0:
        raise ParameterError(f"lambda must be >= 1, got {lambda_}")

    theta_min = math.asin(sr_min)
    theta_max = math.asin(sr_max)
    angles = theta_min + (np.arange(T + 1, dtype=np.float64) / T) * (theta_max - theta_min)
    sr = np.sin(angles)
    nr = np.cos(angles)
    # endpoints pinned to the configured clamps
    sr[0], sr[T] = sr_min, sr_max
    nr[0], nr[T] = math.sqrt(1.0 - sr_min * sr_min), math.sqrt(1.0 - sr_max * sr_max)
    sr.flags.writeable = False
    nr.flags.writeable = False

    logger.debug("schedule_built", T=int(T), sr_min=sr_min, sr_max=sr_max, lambda_=lambda_)
    return Schedule(T=int(T), sr_min=float(sr_min), sr_max=float(sr_max), lambda_=float(lambda_), sr=sr, nr=nr)


def schedule_from_config(config: ScheduleConfig) -> Schedule:
    return make_schedule(config.T, config.sr_min, config.sr_max, config.lambda_)


def coefficient_from_rates(sr_t: float, nr_t: float, sr_prev: float, nr_prev: float) -> float:
    """c = nr_t - sr_t * nr_prev / sr_prev."""
    return nr_t - sr_t * nr_prev / sr_prev


def step_coefficient(s: Schedule, t: int, delta_t: int) -> float:
    """Noise coefficient of the DDIM step from t - delta_t to t."""
    s._check_step(t, delta_t)
    prev = t - delta_t
    return float(coefficient_from_rates(s.sr[t], s.nr[t], s.sr[prev], s.nr[prev]))


def time_grid(T: int, delta_t: int) -> TimeGrid:
    if T < 1:
        raise ParameterError(f"T must be a positive integer, got {T}")
    if delta_t < 1 or T % delta_t != 0:
        raise ParameterError(f"delta_t={delta_t} does not divide T={T}; choose a divisor of T")
    return TimeGrid(delta_t=int(delta_t), points=tuple(range(0, T + 1, delta_t)))


def delta_t_for_steps(T: int, steps: int) -> int:
    """Step size for N reverse steps; N must divide T."""
    if steps < 1 or T % steps != 0:
        raise ParameterError(f"N={steps} steps does not divide T={T}; choose N among the divisors of T")
    return T // steps
