"""
Services: data synthesis, sampling, variance theory, statistics, calibration
and evaluation.
"""

from .concurrency_manager import ConcurrencyManager
from .synthdata import FieldSpec, PairedDataset, sample_field, make_dataset, oracle_for_spec
from .sampler import SamplerConfig, ddim_step, generate, generate_ensemble, generate_ensemble_set, member_stream
from .variance_theory import (
    VariancePrediction, elementwise_variance, elementwise_covariance, mean_trajectory,
    predict_variance_recursive, predict_variance_closed,
)
from .ensemble_stats import (
    EnsembleSet, pixelwise_variance, global_mean_variance, spatial_mean_variance, yearly_mean_variance,
    mvd, mse, ssim, mean_ssim, point_series, summarize,
)
from .calibrate import CalibrationReport, CalibrationSettings, calibrate_steps
from .evaluation import EvaluationReport, evaluate

__all__ = [
    "ConcurrencyManager",
    "FieldSpec",
    "PairedDataset",
    "sample_field",
    "make_dataset",
    "oracle_for_spec",
    "SamplerConfig",
    "ddim_step",
    "generate",
    "generate_ensemble",
    "generate_ensemble_set",
    "member_stream",
    "VariancePrediction",
    "elementwise_variance",
    "elementwise_covariance",
    "mean_trajectory",
    "predict_variance_recursive",
    "predict_variance_closed",
    "EnsembleSet",
    "pixelwise_variance",
    "global_mean_variance",
    "spatial_mean_variance",
    "yearly_mean_variance",
    "mvd",
    "mse",
    "ssim",
    "mean_ssim",
    "point_series",
    "summarize",
    "CalibrationReport",
    "CalibrationSettings",
    "calibrate_steps",
    "EvaluationReport",
    "evaluate",
]
