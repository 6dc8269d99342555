"""
Core interfaces and abstract base classes for ensdiff.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Tuple, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .fields import Standardizer
    from .schedule import Schedule


class Denoiser(ABC):
    """Noise-prediction contract: (noisy field, time index, conditioning) -> predicted noise.

    Fields are passed as batches of shape (B, h, w) on the model grid. Subclasses
    set ``schedule`` and may carry standardizers used to move between the data
    scale and the model scale.
    """

    schedule: "Schedule"
    target_standardizer: Optional["Standardizer"] = None
    cond_standardizer: Optional["Standardizer"] = None

    @property
    @abstractmethod
    def field_shape(self) -> Tuple[int, int]:
        """Shape of generated fields after cropping."""
        pass

    @property
    def grid_shape(self) -> Tuple[int, int]:
        """Shape the denoiser operates on (padded field shape)."""
        return self.field_shape

    @property
    def identifier(self) -> str:
        return type(self).__name__

    @abstractmethod
    def predict(self, x_t: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        """Predict the noise component of a batch of noisy fields at time index t."""
        pass

    def jacobian_diag(self, x: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
        """Analytic Jacobian diagonal of predict at x, or None when unavailable."""
        return None

    def prepare_conditioning(self, lo: Optional[np.ndarray]) -> Optional[np.ndarray]:
        """Map a coarse data-scale field to the conditioning the model consumes."""
        return lo

    def get_model_info(self) -> Dict[str, Any]:
        return {
            "denoiser": self.identifier,
            "field_shape": list(self.field_shape),
            "grid_shape": list(self.grid_shape),
            "T": self.schedule.T,
            "lambda": self.schedule.lambda_,
        }
