"""
ensdiff: step-count-controlled ensemble diffusion for downscaling.

DDIM ensemble generation with a closed-form theory of ensemble variance as a
function of the number of reverse-diffusion steps, plus the tooling needed to
predict, measure and calibrate that variance against a reference ensemble.
"""

__version__ = "1.0.0"
__author__ = "ensdiff Development Team"
__description__ = "Step-count-controlled ensemble diffusion downscaling"
