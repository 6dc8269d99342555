"""
Closed-form noise predictors.

``GaussianOracle`` is the exact conditional expectation E[eps | x_t] when the
data follow N(mu, diag(sigma)); it is linear in x_t, so its Jacobian is known.
"""

from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import ParameterError, ShapeError
from ..core.interfaces import Denoiser
from ..core.schedule import Schedule


class GaussianOracle(Denoiser):
    """Optimal denoiser for independent Gaussian pixels."""

    def __init__(self, mu: np.ndarray, sigma_diag: np.ndarray, schedule: Schedule):
        mu = np.asarray(mu, dtype=np.float64)
        sigma_diag = np.asarray(sigma_diag, dtype=np.float64)
        if mu.ndim != 2 or mu.shape != sigma_diag.shape:
            raise ShapeError(f"mu {mu.shape} and sigma_diag {sigma_diag.shape} must be matching 2-D grids")
        if not np.all(sigma_diag > 0):
            raise ParameterError("sigma_diag must be strictly positive")
        if schedule.lambda_ != 1.0:
            raise ParameterError(f"oracle runs need lambda = 1, got {schedule.lambda_}")
        self.mu = mu
        self.sigma_diag = sigma_diag
        self.schedule = schedule

    @property
    def field_shape(self) -> Tuple[int, int]:
        return self.mu.shape

    def _gain(self, t: int) -> np.ndarray:
        sr, nr = self.schedule.sr[t], self.schedule.nr[t]
        return nr / (sr * sr * self.sigma_diag + nr * nr)

    def predict(self, x_t: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-2:] != self.mu.shape:
            raise ShapeError(f"input grid {x_t.shape[-2:]} does not match oracle grid {self.mu.shape}")
        self.schedule._check_index(t)
        return self._gain(t) * (x_t - self.schedule.sr[t] * self.mu)

    def jacobian_diag(self, x: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        self.schedule._check_index(t)
        return np.broadcast_to(self._gain(t), np.shape(x)).copy()


class ZeroDenoiser(Denoiser):
    """Predicts zero noise everywhere; the DDIM step reduces to rescaling."""

    def __init__(self, shape: Tuple[int, int], schedule: Schedule):
        self._shape = tuple(shape)
        self.schedule = schedule

    @property
    def field_shape(self) -> Tuple[int, int]:
        return self._shape

    def predict(self, x_t: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        return np.zeros_like(np.asarray(x_t, dtype=np.float64))

    def jacobian_diag(self, x: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        return np.zeros(np.shape(x))
