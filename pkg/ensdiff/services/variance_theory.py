"""
Element-wise variance of DDIM ensembles as a function of the step count.

Linearizing the denoiser around the mean trajectory m_t gives a diagonal
recursion v_t = F_t v_{t-dt} + g_t with v_0 = 1. Two closures for the
variance of the predicted noise are available:

* ``UNIT``: Var(eps_hat) ~ 1, so F = r^2 + 2 r c J and g = c^2
  (r = sr[t] / sr[t-dt], c the step coefficient, J the Jacobian diagonal).
* ``LINEARIZED``: Var(eps_hat) ~ J^2 v, so F = (r + c J)^2 and g = 0.
  Exact for affine denoisers such as the Gaussian oracle.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..core.enums import VarianceClosure
from ..core.exceptions import NumericalError, ParameterError, ShapeError
from ..core.interfaces import Denoiser
from ..core.schedule import Schedule, step_coefficient, time_grid
from ..models.jacobian import DEFAULT_FD_STEP, jacobian_diagonal
from .sampler import DIVERGENCE_LIMIT, ddim_step

logger = structlog.get_logger(__name__)


@dataclass
class VariancePrediction:
    """Predicted element-wise variance on the model grid."""
    checkpoints: Dict[int, np.ndarray]
    v_T: np.ndarray
    steps: int
    delta_t: int
    schedule: Dict[str, float]
    denoiser_id: str
    closure: VarianceClosure
    clamp_count: int = 0
    output_scale: float = 1.0
    field_shape: Optional[Tuple[int, int]] = None

    def mean(self) -> float:
        return float(np.mean(self.data_scale()))

    def data_scale(self) -> np.ndarray:
        """v_T in the units of generated fields (cropped to the field shape)."""
        v = self.v_T * self.output_scale
        if self.field_shape is not None:
            v = v[..., :self.field_shape[0], :self.field_shape[1]]
        return v


@dataclass
class _StepOperators:
    F: List[np.ndarray] = field(default_factory=list)
    g: List[np.ndarray] = field(default_factory=list)


def elementwise_variance(samples: Sequence[np.ndarray]) -> np.ndarray:
    """Per-coordinate population variance over the first axis."""
    if len(samples) < 2:
        raise ParameterError(f"element-wise variance needs at least 2 samples, got {len(samples)}")
    try:
        stacked = np.stack([np.asarray(s, dtype=np.float64) for s in samples])
    except ValueError as exc:
        raise ShapeError("samples must share one shape") from exc
    return np.var(stacked, axis=0)


def elementwise_covariance(x: Sequence[np.ndarray], y: Sequence[np.ndarray]) -> np.ndarray:
    """Per-coordinate population covariance of paired samples."""
    a = np.stack([np.asarray(s, dtype=np.float64) for s in x])
    b = np.stack([np.asarray(s, dtype=np.float64) for s in y])
    if a.shape != b.shape:
        raise ShapeError(f"paired sample sets differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise ParameterError("covariance needs at least 2 samples")
    return np.mean((a - a.mean(axis=0)) * (b - b.mean(axis=0)), axis=0)


def mean_trajectory(
    d: Denoiser, s: Schedule, delta_t: int, cond: Optional[np.ndarray] = None,
) -> List[np.ndarray]:
    """m_0 = 0 propagated with the deterministic DDIM update; one entry per grid point."""
    grid = time_grid(s.T, delta_t)
    m = np.zeros(d.grid_shape)
    trajectory = [m]
    for t in grid.steps():
        m = ddim_step(m, t, delta_t, d, s, cond)
        if not np.all(np.isfinite(m)) or np.max(np.abs(m)) > DIVERGENCE_LIMIT:
            raise NumericalError(f"mean trajectory diverged at step t={t}", details={"step": t})
        trajectory.append(m)
    return trajectory


def _step_operators(
    d: Denoiser,
    s: Schedule,
    delta_t: int,
    cond: Optional[np.ndarray],
    closure: VarianceClosure,
    fd_step: float,
) -> _StepOperators:
    trajectory = mean_trajectory(d, s, delta_t, cond)
    ops = _StepOperators()
    for i, t in enumerate(time_grid(s.T, delta_t).steps()):
        ratio = s.signal_ratio(t, delta_t)
        c = step_coefficient(s, t, delta_t)
        J = jacobian_diagonal(d, trajectory[i], t - delta_t, cond, fd_step)
        if closure is VarianceClosure.UNIT:
            ops.F.append(ratio * ratio + 2.0 * ratio * c * J)
            ops.g.append(np.full(J.shape, c * c))
        else:
            ops.F.append((ratio + c * J) ** 2)
            ops.g.append(np.zeros(J.shape))
    return ops


def _output_scale(d: Denoiser) -> float:
    scale = d.schedule.lambda_ ** 2
    if d.target_standardizer is not None:
        scale *= d.target_standardizer.std ** 2
    return float(scale)


def _prediction(
    d: Denoiser, s: Schedule, delta_t: int, closure: VarianceClosure,
    checkpoints: Dict[int, np.ndarray], v_T: np.ndarray, clamp_count: int,
) -> VariancePrediction:
    return VariancePrediction(
        checkpoints=checkpoints,
        v_T=v_T,
        steps=s.T // delta_t,
        delta_t=delta_t,
        schedule=s.to_config().model_dump(by_alias=True),
        denoiser_id=d.identifier,
        closure=closure,
        clamp_count=clamp_count,
        output_scale=_output_scale(d),
        field_shape=tuple(d.field_shape),
    )


def predict_variance_recursive(
    d: Denoiser,
    s: Schedule,
    delta_t: int,
    cond: Optional[np.ndarray] = None,
    closure: VarianceClosure = VarianceClosure.UNIT,
    fd_step: float = DEFAULT_FD_STEP,
) -> VariancePrediction:
    """Iterate v_t = F_t v_{t-dt} + g_t from v_0 = 1, clamping negative entries to 0."""
    ops = _step_operators(d, s, delta_t, cond, closure, fd_step)
    v = np.ones(d.grid_shape)
    checkpoints = {0: v}
    clamped = 0
    for t, F, g in zip(time_grid(s.T, delta_t).steps(), ops.F, ops.g):
        v = F * v + g
        negative = v < 0
        if negative.any():
            count = int(negative.sum())
            clamped += count
            logger.warning("variance_clamped", count=count, step=t)
            v = np.where(negative, 0.0, v)
        checkpoints[t] = v
    return _prediction(d, s, delta_t, closure, checkpoints, v, clamped)


def predict_variance_closed(
    d: Denoiser,
    s: Schedule,
    delta_t: int,
    cond: Optional[np.ndarray] = None,
    closure: VarianceClosure = VarianceClosure.UNIT,
    fd_step: float = DEFAULT_FD_STEP,
) -> VariancePrediction:
    """v_T = (prod_i F_i) 1 + sum_i (prod_{k>i} F_k) g_i with diagonal F."""
    ops = _step_operators(d, s, delta_t, cond, closure, fd_step)
    n_steps = len(ops.F)

    # suffix[i] = F[n-1] * ... * F[i]; suffix[n] is the identity
    suffix = [np.ones(d.grid_shape) for _ in range(n_steps + 1)]
    for i in range(n_steps - 1, -1, -1):
        suffix[i] = ops.F[i] * suffix[i + 1]

    homogeneous = np.ones(d.grid_shape)
    for F in ops.F:
        homogeneous = F * homogeneous
    v_T = homogeneous
    for i in range(n_steps):
        v_T = v_T + suffix[i + 1] * ops.g[i]

    clamped = int(np.sum(v_T < 0))
    if clamped:
        logger.warning("variance_clamped", count=clamped, step=s.T)
        v_T = np.where(v_T < 0, 0.0, v_T)
    return _prediction(d, s, delta_t, closure, {0: np.ones(d.grid_shape), s.T: v_T}, v_T, clamped)
