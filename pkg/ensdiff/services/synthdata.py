"""
Synthetic downscaling task with known statistics.

High-resolution "truth" fields are Gaussian random fields around a smooth mean
pattern; the conditioning is their align-corners bilinear coarsening. Seasons
are assigned round-robin and modulate the fluctuation amplitude.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage

from ..core.enums import SEASON_LABELS, CovarianceKind, Season
from ..core.exceptions import ParameterError
from ..core.fields import bilinear_resize
from ..core.schedule import Schedule
from ..models.oracle import GaussianOracle
from .concurrency_manager import ConcurrencyManager

logger = structlog.get_logger(__name__)

DEFAULT_SEASONAL_AMPLITUDES = {"JFM": 1.2, "AMJ": 0.9, "JAS": 0.8, "OND": 1.1}

SeedLike = Union[int, np.random.SeedSequence]


class FieldSpec(BaseModel):
    """Distribution of synthetic high-resolution fields."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    height: int = Field(16, ge=1)
    width: int = Field(16, ge=1)
    kind: CovarianceKind = CovarianceKind.SMOOTHED_SPECTRAL
    mean_level: float = 6.0
    mean_amplitude: float = 1.5
    variance: float = Field(1.0, gt=0.0)
    variance_low: float = Field(0.5, gt=0.0)
    variance_high: float = Field(2.0, gt=0.0)
    length_scale: float = Field(3.0, ge=0.0)
    seasonal_amplitudes: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_SEASONAL_AMPLITUDES))

    @model_validator(mode="after")
    def _check_profile(self) -> "FieldSpec":
        if self.variance_low > self.variance_high:
            raise ValueError("variance_low must not exceed variance_high")
        if set(self.seasonal_amplitudes) != set(SEASON_LABELS):
            raise ValueError(f"seasonal_amplitudes needs exactly the keys {list(SEASON_LABELS)}")
        if any(a <= 0 for a in self.seasonal_amplitudes.values()):
            raise ValueError("seasonal amplitudes must be positive")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def _coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        y = (np.arange(self.height) + 0.5) / self.height
        x = (np.arange(self.width) + 0.5) / self.width
        return np.meshgrid(y, x, indexing="ij")

    def mean_field(self) -> np.ndarray:
        yy, xx = self._coordinates()
        return self.mean_level + self.mean_amplitude * np.sin(np.pi * xx) * np.cos(np.pi * yy)

    def variance_field(self) -> np.ndarray:
        """Per-pixel variance before seasonal modulation."""
        if self.kind is CovarianceKind.DIAGONAL_PROFILE:
            yy, xx = self._coordinates()
            profile = 0.5 * (1.0 + np.sin(2.0 * np.pi * xx) * np.cos(2.0 * np.pi * yy))
            return self.variance_low + (self.variance_high - self.variance_low) * profile
        return np.full(self.shape, self.variance)

    def amplitude(self, season: Optional[Season]) -> float:
        return 1.0 if season is None else self.seasonal_amplitudes[season.value]


@dataclass(frozen=True)
class PairedDataset:
    """S (hi, lo, season) triples produced with coarsening factor f."""
    hi: np.ndarray
    lo: np.ndarray
    seasons: Tuple[Season, ...]
    factor: int
    spec: FieldSpec

    @property
    def samples(self) -> int:
        return self.hi.shape[0]

    @property
    def coarse_shape(self) -> Tuple[int, int]:
        return tuple(self.lo.shape[-2:])


def _smoothing_norm(shape: Tuple[int, int], length_scale: float) -> float:
    delta = np.zeros(shape)
    delta[0, 0] = 1.0
    kernel = ndimage.gaussian_filter(delta, sigma=length_scale, mode="wrap")
    return float(np.sqrt(np.sum(kernel ** 2)))


def sample_field(spec: FieldSpec, season: Optional[Season], seed: SeedLike) -> np.ndarray:
    """One field: mean + seasonal amplitude * std * (possibly smoothed) unit noise."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(spec.shape)
    if spec.kind is CovarianceKind.SMOOTHED_SPECTRAL and spec.length_scale > 0:
        noise = ndimage.gaussian_filter(noise, sigma=spec.length_scale, mode="wrap")
        noise /= _smoothing_norm(spec.shape, spec.length_scale)
    return spec.mean_field() + spec.amplitude(season) * np.sqrt(spec.variance_field()) * noise


def make_dataset(
    spec: FieldSpec, samples: int, factor: int, seed: int, pool: Optional[ConcurrencyManager] = None,
) -> PairedDataset:
    """Seed-deterministic paired dataset; sample i uses the stream (seed, i)."""
    if samples < 1:
        raise ParameterError(f"need at least one sample, got {samples}")
    if factor < 1 or spec.height % factor or spec.width % factor:
        raise ParameterError(f"coarsening factor {factor} must divide the grid {spec.height}x{spec.width}")

    coarse = (spec.height // factor, spec.width // factor)
    seasons = tuple(Season.for_index(i) for i in range(samples))

    def build(i: int) -> Tuple[np.ndarray, np.ndarray]:
        hi = sample_field(spec, seasons[i], np.random.SeedSequence([seed, i]))
        return hi, bilinear_resize(hi, *coarse)

    pool = pool or ConcurrencyManager(1)
    pairs = pool.map_ordered(build, range(samples))
    logger.info("dataset_generated", samples=samples, factor=factor, kind=spec.kind.value)
    return PairedDataset(
        hi=np.stack([p[0] for p in pairs]),
        lo=np.stack([p[1] for p in pairs]),
        seasons=seasons,
        factor=factor,
        spec=spec,
    )


def oracle_for_spec(spec: FieldSpec, schedule: Schedule, season: Optional[Season] = None) -> GaussianOracle:
    """Exact denoiser for the per-pixel marginals of a spec (exact for white/diagonal kinds)."""
    variance = spec.amplitude(season) ** 2 * spec.variance_field()
    return GaussianOracle(spec.mean_field(), variance, schedule)
