"""Noise reduction: Gaussian filtering, Chambolle TV and two-stage BM3D."""
from .bm3d import Bm3dProfile, block_match, bm3d
from .gaussian import gaussian_filter, gaussian_kernel1d
from .tv import TvParams, tv_denoise, tv_energy

METHODS = ("gaussian", "tv", "bm3d")

__all__ = [
    "METHODS",
    "Bm3dProfile",
    "TvParams",
    "block_match",
    "bm3d",
    "gaussian_filter",
    "gaussian_kernel1d",
    "tv_denoise",
    "tv_energy",
]
