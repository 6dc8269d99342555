"""
Jacobian-diagonal estimation for denoisers.
"""

from typing import Optional

import numpy as np

from ..core.exceptions import NumericalError, ParameterError
from ..core.interfaces import Denoiser

DEFAULT_FD_STEP = 1e-3


def jacobian_diag_fd(
    d: Denoiser,
    m: np.ndarray,
    t: int,
    cond: Optional[np.ndarray] = None,
    h: float = DEFAULT_FD_STEP,
    chunk_size: int = 512,
) -> np.ndarray:
    """Central-difference estimate of diag(d eps_hat / d x) at m.

    Every coordinate is perturbed in both directions; perturbed copies are
    evaluated in batches of ``chunk_size`` fields.
    """
    if h <= 0:
        raise ParameterError(f"finite-difference step must be positive, got {h}")
    m = np.asarray(m, dtype=np.float64)
    shape = m.shape
    n = m.size
    flat = m.reshape(-1)
    diag = np.empty(n)

    per_chunk = max(1, chunk_size // 2)
    for start in range(0, n, per_chunk):
        idx = np.arange(start, min(start + per_chunk, n))
        k = idx.size
        plus = np.repeat(flat[None, :], k, axis=0)
        minus = plus.copy()
        plus[np.arange(k), idx] += h
        minus[np.arange(k), idx] -= h
        batch = np.concatenate([plus, minus]).reshape((2 * k,) + shape)

        out = np.asarray(d.predict(batch, t, cond), dtype=np.float64).reshape(2 * k, n)
        forward = out[np.arange(k), idx]
        backward = out[k + np.arange(k), idx]
        bad = ~(np.isfinite(forward) & np.isfinite(backward))
        if bad.any():
            coordinate = int(idx[np.argmax(bad)])
            raise NumericalError(
                f"denoiser output is non-finite at coordinate {coordinate} (t={t})",
                details={"coordinate": coordinate, "t": t},
            )
        diag[idx] = (forward - backward) / (2.0 * h)

    return diag.reshape(shape)


def jacobian_diagonal(
    d: Denoiser,
    m: np.ndarray,
    t: int,
    cond: Optional[np.ndarray] = None,
    h: float = DEFAULT_FD_STEP,
) -> np.ndarray:
    """Analytic diagonal when the denoiser provides one, finite differences otherwise."""
    analytic = d.jacobian_diag(m, t, cond)
    if analytic is not None:
        return np.asarray(analytic, dtype=np.float64)
    return jacobian_diag_fd(d, m, t, cond, h)
