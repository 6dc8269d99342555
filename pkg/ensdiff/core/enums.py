"""
Enumerations and constants for ensdiff.
"""

from enum import Enum
from typing import Tuple


class Season(Enum):
    """Three-monthly seasons used for spatial variance maps."""
    JFM = "JFM"
    AMJ = "AMJ"
    JAS = "JAS"
    OND = "OND"

    @classmethod
    def ordered(cls) -> Tuple["Season", ...]:
        return (cls.JFM, cls.AMJ, cls.JAS, cls.OND)

    @classmethod
    def for_index(cls, sample_index: int) -> "Season":
        """Round-robin season assignment by sample index."""
        return cls.ordered()[sample_index % 4]


class CovarianceKind(Enum):
    """Covariance structure of synthetic fields."""
    WHITE = "white"
    DIAGONAL_PROFILE = "diagonal-profile"
    SMOOTHED_SPECTRAL = "smoothed-spectral"


class Criterion(Enum):
    """Step-count calibration criteria."""
    GLOBAL = "global"  # match global mean variance
    MVD = "mvd"        # minimise yearly mean-variance discrepancy


class VarianceClosure(Enum):
    """How the variance of the predicted noise enters the recursion."""
    UNIT = "unit"              # Var(eps_hat) ~ 1
    LINEARIZED = "linearized"  # Var(eps_hat) ~ J^2 v


class DenoiserKind(Enum):
    """Network roles stored in checkpoints."""
    DENOISER = 0
    REGRESSOR = 1


SEASON_LABELS = tuple(season.value for season in Season.ordered())
