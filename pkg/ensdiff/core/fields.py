"""
Grid preprocessing primitives: wind speed, bilinear resizing, mirror padding,
cropping and standardization.

Grids are 2-D float64 numpy arrays; batched variants accept a leading axis.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import structlog

from .exceptions import NumericalError, ParameterError, ShapeError

logger = structlog.get_logger(__name__)

STD_EPSILON = 1e-8


def as_grid(values: np.ndarray, name: str = "grid") -> np.ndarray:
    """Validate a 2-D finite grid and return it as float64."""
    grid = np.asarray(values, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2-D grid, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise NumericalError(f"{name} contains non-finite values")
    return grid


def wind_speed(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Speed from the two horizontal wind components."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"wind components differ in shape: {u.shape} vs {v.shape}")
    return np.sqrt(u * u + v * v)


def _interpolation_weights(source: int, target: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if target == 1:
        coords = np.zeros(1)
    else:
        coords = np.arange(target, dtype=np.float64) * (source - 1) / (target - 1)
    lower = np.floor(coords).astype(np.intp)
    lower = np.minimum(lower, source - 1)
    upper = np.minimum(lower + 1, source - 1)
    return lower, upper, coords - lower


def bilinear_resize(g: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Align-corners bilinear resize over the last two axes."""
    grid = np.asarray(g, dtype=np.float64)
    if grid.ndim < 2 or grid.shape[-1] == 0 or grid.shape[-2] == 0:
        raise ShapeError(f"cannot resize an empty grid of shape {grid.shape}")
    if h2 < 1 or w2 < 1:
        raise ParameterError(f"target size must be at least 1x1, got {h2}x{w2}")
    h, w = grid.shape[-2:]
    if (h, w) == (h2, w2):
        return grid.copy()

    top, bottom, wy = _interpolation_weights(h, h2)
    rows = grid[..., top, :] + wy[:, None] * (grid[..., bottom, :] - grid[..., top, :])
    left, right, wx = _interpolation_weights(w, w2)
    return rows[..., left] + wx * (rows[..., right] - rows[..., left])


def mirror_pad(g: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Pad bottom/right by reflection without repeating the edge."""
    grid = np.asarray(g, dtype=np.float64)
    h, w = grid.shape[-2:]
    if h2 < h or w2 < w:
        raise ParameterError(f"pad target {h2}x{w2} is smaller than the grid {h}x{w}; use crop")
    if h2 - h >= h or w2 - w >= w:
        raise ParameterError(f"pad of {h2 - h}x{w2 - w} exceeds what a {h}x{w} grid can reflect")
    if (h, w) == (h2, w2):
        return grid.copy()
    widths = [(0, 0)] * (grid.ndim - 2) + [(0, h2 - h), (0, w2 - w)]
    return np.pad(grid, widths, mode="reflect")


def crop(g: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Top-left h2 x w2 block."""
    grid = np.asarray(g)
    h, w = grid.shape[-2:]
    if h2 > h or w2 > w or h2 < 1 or w2 < 1:
        raise ParameterError(f"cannot crop {h2}x{w2} from a {h}x{w} grid")
    return grid[..., :h2, :w2].copy()


def padded_shape(shape: Tuple[int, int], multiple: int) -> Tuple[int, int]:
    """Smallest shape >= shape with both dims divisible by multiple."""
    h, w = shape
    return (math.ceil(h / multiple) * multiple, math.ceil(w / multiple) * multiple)


@dataclass(frozen=True)
class Standardizer:
    """Global affine normalization (x - mean) / std."""
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not (self.std >= STD_EPSILON):
            raise ParameterError(f"standardizer std must be >= {STD_EPSILON}, got {self.std}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    @classmethod
    def identity(cls) -> "Standardizer":
        return cls(mean=0.0, std=1.0)


def fit_standardizer(train: Sequence[np.ndarray]) -> Standardizer:
    """Mean and population std over every pixel of every training grid."""
    if len(train) == 0:
        raise ParameterError("cannot fit a standardizer on an empty training set")
    values = np.concatenate([np.asarray(g, dtype=np.float64).ravel() for g in train])
    if values.size == 0:
        raise ShapeError("training grids are empty")
    if not np.all(np.isfinite(values)):
        raise NumericalError("training set contains non-finite values")

    mean = float(values.mean())
    std = float(np.sqrt(np.mean((values - mean) ** 2)))
    if std < STD_EPSILON:
        logger.warning("standardizer_degenerate", std=std, guard=STD_EPSILON)
        warnings.warn(
            f"training set is constant (std={std}); clamping std to {STD_EPSILON}",
            RuntimeWarning,
            stacklevel=2,
        )
        std = STD_EPSILON
    return Standardizer(mean=mean, std=std)
