"""Brain MRI preprocessing (crop, bias correction, denoising, skull stripping,
augmentation) and a small from-scratch CNN classifier with evaluation metrics."""
from .errors import BrainMRIError
from .imgcore import NETWORK_SIZE, load_image, load_pgm, psnr, resize_bilinear, save_pgm
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BrainMRIError",
    "NETWORK_SIZE",
    "__version__",
    "load_image",
    "load_pgm",
    "psnr",
    "resize_bilinear",
    "save_pgm",
]
