"""
Empirical ensemble metrics: pixel-wise variance, global and seasonal mean
variance, the mean-variance discrepancy (MVD), MSE and SSIM.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from skimage.metrics import structural_similarity

from ..core.enums import Season
from ..core.exceptions import ParameterError, ShapeError
from ..core.fields import bilinear_resize

logger = structlog.get_logger(__name__)

SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True, eq=False)
class EnsembleSet:
    """Ensembles for S conditioning samples: values of shape (S, M, h, w)."""
    values: np.ndarray
    seasons: Optional[Tuple[Season, ...]] = None

    def __post_init__(self) -> None:
        if self.values.ndim != 4 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ShapeError(f"ensemble set must have shape (S, M, h, w) with S, M >= 1, got {self.values.shape}")
        if self.seasons is not None and len(self.seasons) != self.values.shape[0]:
            raise ShapeError(f"{len(self.seasons)} season labels for {self.values.shape[0]} samples")

    @property
    def samples(self) -> int:
        return self.values.shape[0]

    @property
    def members(self) -> int:
        return self.values.shape[1]

    @property
    def field_shape(self) -> Tuple[int, int]:
        return tuple(self.values.shape[2:])

    def resized(self, h: int, w: int) -> "EnsembleSet":
        """Bilinearly resample every member to h x w."""
        if (h, w) == self.field_shape:
            return self
        return EnsembleSet(bilinear_resize(self.values, h, w), self.seasons)

    def ensemble_mean(self) -> np.ndarray:
        return np.mean(np.asarray(self.values, dtype=np.float64), axis=1)


def pixelwise_variance(D: EnsembleSet) -> np.ndarray:
    """(S, h, w) population variance over members."""
    if D.members < 2:
        raise ParameterError(f"pixel-wise variance needs M >= 2 members, got {D.members}")
    return np.var(np.asarray(D.values, dtype=np.float64), axis=1)


def global_mean_variance(V: np.ndarray) -> float:
    V = np.asarray(V, dtype=np.float64)
    if V.size == 0:
        raise ShapeError("variance maps are empty")
    return float(np.mean(V))


def yearly_mean_variance(V: np.ndarray) -> np.ndarray:
    """Per-pixel mean of V over all samples."""
    return np.mean(np.asarray(V, dtype=np.float64), axis=0)


def spatial_mean_variance(
    V: np.ndarray, labels: Sequence[Season], seasons: Optional[Iterable[Season]] = None,
) -> Dict[Season, np.ndarray]:
    """Per-season mean variance maps; defaults to the seasons present in labels."""
    V = np.asarray(V, dtype=np.float64)
    labels = tuple(labels)
    if len(labels) != V.shape[0]:
        raise ShapeError(f"{len(labels)} season labels for {V.shape[0]} variance maps")
    requested = tuple(seasons) if seasons is not None else tuple(s for s in Season.ordered() if s in labels)

    maps: Dict[Season, np.ndarray] = {}
    for season in requested:
        mask = np.array([label is season for label in labels])
        if not mask.any():
            raise ParameterError(f"season {season.value} has no samples")
        maps[season] = V[mask].mean(axis=0)
    return maps


def mvd(map_a: np.ndarray, map_b: np.ndarray) -> float:
    """Mean absolute difference between two variance maps."""
    a = np.asarray(map_a, dtype=np.float64)
    b = np.asarray(map_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"variance maps differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"fields differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def data_range(reference: np.ndarray) -> float:
    """max - min of the reference values; must be positive."""
    reference = np.asarray(reference, dtype=np.float64)
    span = float(reference.max() - reference.min())
    if span <= 0:
        raise ParameterError("SSIM needs a reference with non-zero dynamic range")
    return span


def ssim(a: np.ndarray, b: np.ndarray, value_range: Optional[float] = None) -> float:
    """Mean SSIM of a against reference b (11x11 Gaussian window, sigma 1.5)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"SSIM needs two grids of equal 2-D shape, got {a.shape} and {b.shape}")
    value_range = data_range(b) if value_range is None else value_range
    if value_range <= 0:
        raise ParameterError("SSIM needs a reference with non-zero dynamic range")
    try:
        return float(structural_similarity(
            a, b,
            data_range=value_range,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            K1=SSIM_K1,
            K2=SSIM_K2,
        ))
    except ValueError as exc:
        raise ShapeError(f"grid {a.shape} is too small for the 11x11 SSIM window") from exc


def mean_ssim(predictions: np.ndarray, references: np.ndarray) -> float:
    """Average of per-sample SSIM with one dynamic range for the whole evaluation set."""
    value_range = data_range(references)
    return float(np.mean([ssim(p, r, value_range) for p, r in zip(predictions, references)]))


def point_series(D: EnsembleSet, x: int, y: int, window: int = 30) -> pd.DataFrame:
    """Ensemble mean and +/- one std at pixel (y, x) over samples, with a trailing moving average."""
    h, w = D.field_shape
    if not (0 <= x < w and 0 <= y < h):
        raise ParameterError(f"pixel ({x}, {y}) outside the {h}x{w} grid")
    if window < 1:
        raise ParameterError(f"moving-average window must be >= 1, got {window}")
    values = np.asarray(D.values[:, :, y, x], dtype=np.float64)
    frame = pd.DataFrame({
        "sample": np.arange(D.samples),
        "mean": values.mean(axis=1),
        "std": values.std(axis=1),
    })
    frame["mean_smoothed"] = frame["mean"].rolling(window, min_periods=1).mean()
    frame["std_smoothed"] = frame["std"].rolling(window, min_periods=1).mean()
    frame["lower"] = frame["mean_smoothed"] - frame["std_smoothed"]
    frame["upper"] = frame["mean_smoothed"] + frame["std_smoothed"]
    return frame


def seasonal_ensemble_mean_mse(
    D: EnsembleSet, truth: np.ndarray, labels: Sequence[Season],
) -> Dict[str, float]:
    """MSE of the ensemble mean against truth, for all samples and per season present."""
    means = D.ensemble_mean()
    truth = np.asarray(truth, dtype=np.float64)
    result = {"all": mse(means, truth)}
    for season in Season.ordered():
        mask = np.array([label is season for label in labels])
        if mask.any():
            result[season.value] = mse(means[mask], truth[mask])
    return result


def summarize(
    D: EnsembleSet,
    steps: int,
    reference: Optional[EnsembleSet] = None,
    truth: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """One stats row: mu_V, MVD against a reference (yearly and seasonal), MSE and SSIM.

    Missing comparisons are reported as NaN. MSE/SSIM compare the ensemble mean
    with ``truth`` (already on the evaluation scale).
    """
    V = pixelwise_variance(D)
    row: Dict[str, float] = {"N_steps": steps, "mu_V": global_mean_variance(V)}

    mvd_columns = ["MVD_yearly"] + [f"MVD_{s.value}" for s in Season.ordered()]
    row.update({name: float("nan") for name in mvd_columns})
    if reference is not None:
        ours_V = V if reference.field_shape == D.field_shape else pixelwise_variance(D.resized(*reference.field_shape))
        V_ref = pixelwise_variance(reference)
        row["MVD_yearly"] = mvd(yearly_mean_variance(ours_V), yearly_mean_variance(V_ref))
        if D.seasons is not None and reference.seasons is not None:
            ours = spatial_mean_variance(ours_V, D.seasons)
            theirs = spatial_mean_variance(V_ref, reference.seasons)
            for season in ours.keys() & theirs.keys():
                row[f"MVD_{season.value}"] = mvd(ours[season], theirs[season])

    row["MSE"] = float("nan")
    row["SSIM"] = float("nan")
    if truth is not None:
        means = D.ensemble_mean()
        row["MSE"] = mse(means, truth)
        row["SSIM"] = mean_ssim(means, truth)
    return row
