"""
Downscaling skill of DDIM ensembles against bilinear upsampling and the
deterministic baseline, on standardized values.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import structlog

from ..core.enums import Season
from ..core.fields import Standardizer, bilinear_resize, fit_standardizer
from ..core.interfaces import Denoiser
from ..core.schedule import delta_t_for_steps
from .concurrency_manager import ConcurrencyManager
from .ensemble_stats import EnsembleSet, mean_ssim, seasonal_ensemble_mean_mse
from .sampler import SamplerConfig, generate_ensemble_set
from .synthdata import PairedDataset

logger = structlog.get_logger(__name__)


@dataclass
class EvaluationReport:
    rows: List[Dict[str, object]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.rows, columns=["method", "N_steps", "season", "MSE", "SSIM"])

    def metric(self, method: str, steps: int = 0, season: str = "all", name: str = "MSE") -> float:
        for row in self.rows:
            if row["method"] == method and row["N_steps"] == steps and row["season"] == season:
                return float(row[name])
        raise KeyError(f"no {name} for method={method} N={steps} season={season}")


def _add_rows(
    report: EvaluationReport, method: str, steps: int, predictions: np.ndarray,
    truth: np.ndarray, seasons: Sequence[Season],
) -> None:
    """predictions: (S, h, w) point estimates on the standardized scale."""
    per_season = seasonal_ensemble_mean_mse(EnsembleSet(predictions[:, None]), truth, seasons)
    for season, value in per_season.items():
        report.rows.append({
            "method": method,
            "N_steps": steps,
            "season": season,
            "MSE": value,
            "SSIM": mean_ssim(predictions, truth) if season == "all" else float("nan"),
        })


def evaluate(
    d: Denoiser,
    dataset: PairedDataset,
    steps: Sequence[int],
    members: int = 10,
    seed: int = 0,
    baseline=None,
    pool: Optional[ConcurrencyManager] = None,
) -> EvaluationReport:
    """MSE/SSIM of ensemble means per step count, bilinear upsampling and an optional baseline."""
    standardizer: Standardizer = d.target_standardizer or fit_standardizer(list(dataset.hi))
    truth = standardizer.apply(dataset.hi)
    h, w = dataset.hi.shape[-2:]
    report = EvaluationReport()

    for n in steps:
        cfg = SamplerConfig(schedule=d.schedule, delta_t=delta_t_for_steps(d.schedule.T, n), members=members, base_seed=seed)
        ensembles = generate_ensemble_set(d, cfg, list(dataset.lo), pool)
        means = EnsembleSet(standardizer.apply(ensembles)).ensemble_mean()
        _add_rows(report, "ddim", n, means, truth, dataset.seasons)
        logger.info("evaluated_steps", N=n, mse=report.metric("ddim", n))

    _add_rows(report, "bilinear", 0, standardizer.apply(bilinear_resize(dataset.lo, h, w)), truth, dataset.seasons)
    if baseline is not None:
        _add_rows(report, "baseline", 0, standardizer.apply(baseline.predict_fields(dataset.lo)), truth, dataset.seasons)
    return report
