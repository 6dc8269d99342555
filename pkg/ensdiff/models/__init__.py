"""
Denoiser implementations: the analytic Gaussian oracle and the small trainable
residual networks.
"""

from .oracle import GaussianOracle, ZeroDenoiser
from .jacobian import jacobian_diag_fd, jacobian_diagonal

# network and training import TensorFlow; import them from their modules.

__all__ = [
    "GaussianOracle",
    "ZeroDenoiser",
    "jacobian_diag_fd",
    "jacobian_diagonal",
]
