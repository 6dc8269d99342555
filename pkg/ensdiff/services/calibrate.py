"""
Step-count calibration against a reference ensemble.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import structlog

from ..core.enums import Criterion, Season
from ..core.exceptions import ParameterError
from ..core.interfaces import Denoiser
from ..core.schedule import delta_t_for_steps
from .concurrency_manager import ConcurrencyManager
from .ensemble_stats import (
    EnsembleSet, global_mean_variance, mvd, pixelwise_variance, spatial_mean_variance, yearly_mean_variance,
)
from .sampler import SamplerConfig, generate_ensemble_set

logger = structlog.get_logger(__name__)


@dataclass
class CandidateResult:
    """Statistics of the ensemble generated with one step count."""
    steps: int
    delta_t: int
    mu_v: float
    mvd_yearly: float
    mvd_seasonal: Dict[str, float]
    mse_to_reference_mean: float
    runtime_seconds: float


@dataclass
class CalibrationReport:
    candidates: List[int]
    criterion: Criterion
    reference_mu_v: float
    rows: List[CandidateResult] = field(default_factory=list)
    best_n: Dict[Criterion, int] = field(default_factory=dict)

    @property
    def best(self) -> int:
        return self.best_n[self.criterion]

    def to_frame(self) -> pd.DataFrame:
        """Report rows; runtimes are left out so the table is reproducible."""
        records = []
        for row in self.rows:
            record = {
                "N_steps": row.steps,
                "delta_t": row.delta_t,
                "mu_V": row.mu_v,
                "mu_V_reference": self.reference_mu_v,
                "abs_mu_V_diff": abs(row.mu_v - self.reference_mu_v),
                "MVD_yearly": row.mvd_yearly,
            }
            for season in Season.ordered():
                record[f"MVD_{season.value}"] = row.mvd_seasonal.get(season.value, float("nan"))
            record["MSE_reference_mean"] = row.mse_to_reference_mean
            record["best_global"] = row.steps == self.best_n[Criterion.GLOBAL]
            record["best_mvd"] = row.steps == self.best_n[Criterion.MVD]
            records.append(record)
        return pd.DataFrame.from_records(records)


@dataclass(frozen=True, eq=False)
class CalibrationSettings:
    seed: int = 0
    members: Optional[int] = None
    conditionings: Optional[Sequence[Optional[np.ndarray]]] = None
    final_projection: bool = False


def _argmin_smallest(scores: Dict[int, float]) -> int:
    return min(scores, key=lambda n: (scores[n], n))


def calibrate_steps(
    d: Denoiser,
    reference: EnsembleSet,
    candidates: Sequence[int],
    criterion: Criterion = Criterion.GLOBAL,
    cfg: Optional[CalibrationSettings] = None,
    pool: Optional[ConcurrencyManager] = None,
) -> CalibrationReport:
    """Sweep step counts and pick the one whose ensemble variance best matches the reference."""
    cfg = cfg or CalibrationSettings()
    candidates = [int(n) for n in candidates]
    if not candidates:
        raise ParameterError("need at least one candidate step count")
    if reference.members < 2:
        raise ParameterError(f"reference ensemble needs M >= 2 members, got {reference.members}")
    T = d.schedule.T
    deltas = {n: delta_t_for_steps(T, n) for n in candidates}

    conditionings = list(cfg.conditionings) if cfg.conditionings is not None else [None] * reference.samples
    if len(conditionings) != reference.samples:
        raise ParameterError(f"{len(conditionings)} conditionings for {reference.samples} reference samples")
    members = cfg.members or reference.members

    V_ref = pixelwise_variance(reference)
    ref_mu = global_mean_variance(V_ref)
    ref_yearly = yearly_mean_variance(V_ref)
    ref_seasonal = spatial_mean_variance(V_ref, reference.seasons) if reference.seasons else {}
    ref_mean = reference.ensemble_mean()

    report = CalibrationReport(candidates=candidates, criterion=criterion, reference_mu_v=ref_mu)
    for n in candidates:
        started = time.perf_counter()
        sampler_cfg = SamplerConfig(
            schedule=d.schedule, delta_t=deltas[n], members=members, base_seed=cfg.seed,
            final_projection=cfg.final_projection,
        )
        generated = EnsembleSet(
            generate_ensemble_set(d, sampler_cfg, conditionings, pool), reference.seasons
        ).resized(*reference.field_shape)
        V = pixelwise_variance(generated)
        seasonal = {}
        if ref_seasonal:
            ours = spatial_mean_variance(V, generated.seasons, ref_seasonal.keys())
            seasonal = {s.value: mvd(ours[s], ref_seasonal[s]) for s in ref_seasonal}

        row = CandidateResult(
            steps=n,
            delta_t=deltas[n],
            mu_v=global_mean_variance(V),
            mvd_yearly=mvd(yearly_mean_variance(V), ref_yearly),
            mvd_seasonal=seasonal,
            mse_to_reference_mean=float(np.mean((generated.ensemble_mean() - ref_mean) ** 2)),
            runtime_seconds=time.perf_counter() - started,
        )
        report.rows.append(row)
        logger.info(
            "calibration_candidate", N=n, mu_v=row.mu_v, mu_v_ref=ref_mu,
            mvd=row.mvd_yearly, runtime=round(row.runtime_seconds, 3),
        )

    report.best_n[Criterion.GLOBAL] = _argmin_smallest({r.steps: abs(r.mu_v - ref_mu) for r in report.rows})
    report.best_n[Criterion.MVD] = _argmin_smallest({r.steps: r.mvd_yearly for r in report.rows})
    logger.info("calibration_done", best_global=report.best_n[Criterion.GLOBAL], best_mvd=report.best_n[Criterion.MVD])
    return report
