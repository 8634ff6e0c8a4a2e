import math

import numpy as np

from ..errors import ArgumentError
from ..imgcore import as_image, convolve1d


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized sampled Gaussian of radius ``ceil(3 * sigma)``."""
    if sigma < 0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_filter(image, sigma: float, border: str = "reflect") -> np.ndarray:
    """Separable Gaussian blur; ``sigma == 0`` returns a copy of the input."""
    img = as_image(image)
    k = gaussian_kernel1d(sigma)
    if k.size == 1:
        return img.copy()
    return convolve1d(convolve1d(img, k, axis=0, border=border), k, axis=1, border=border)
