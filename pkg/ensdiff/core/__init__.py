"""
Core module containing the schedule, field primitives, configuration and the
shared object model.
"""

from .exceptions import *
from .enums import *
from .interfaces import Denoiser
from .schedule import (
    Schedule, TimeGrid, make_schedule, schedule_from_config, step_coefficient, time_grid, delta_t_for_steps,
)
from .fields import (
    Standardizer, wind_speed, bilinear_resize, mirror_pad, crop, fit_standardizer, padded_shape,
)

__all__ = [
    # Object model
    "Denoiser",
    "Schedule",
    "TimeGrid",
    "Standardizer",

    # Operations
    "make_schedule",
    "schedule_from_config",
    "step_coefficient",
    "time_grid",
    "delta_t_for_steps",
    "wind_speed",
    "bilinear_resize",
    "mirror_pad",
    "crop",
    "fit_standardizer",
    "padded_shape",

    # Enums
    "Season",
    "CovarianceKind",
    "Criterion",
    "VarianceClosure",
    "DenoiserKind",

    # Exceptions
    "EnsDiffException",
    "ParameterError",
    "RangeError",
    "ShapeError",
    "NumericalError",
    "TrainingError",
    "FormatError",
    "ConfigurationError",
]
