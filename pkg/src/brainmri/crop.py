"""Background removal: crop a scan to the extreme points of its largest foreground blob."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .denoise.gaussian import gaussian_filter
from .errors import ArgumentError, EmptyRegionError
from .imgcore import NETWORK_SIZE, as_image, as_mask, resize_bilinear

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 45.0 / 255.0
PRE_BLUR_SIGMA = 1.0


@dataclass(frozen=True)
class Extremes:
    """Extreme points of a region as ``(x, y)`` pairs."""

    left: tuple[int, int]
    right: tuple[int, int]
    top: tuple[int, int]
    bottom: tuple[int, int]

    @property
    def box(self) -> tuple[int, int, int, int]:
        """Inclusive bounding box ``(x0, y0, x1, y1)``."""
        return self.left[0], self.top[1], self.right[0], self.bottom[1]


def binarize(image, threshold: float) -> np.ndarray:
    return as_image(image) > threshold


def largest_component(mask, connectivity: int = 8) -> np.ndarray:
    """Keep only the biggest connected component (earliest in raster order on ties)."""
    m = as_mask(mask)
    if connectivity not in (4, 8):
        raise ArgumentError(f"connectivity must be 4 or 8, got {connectivity}")
    if not m.any():
        return np.zeros_like(m)
    labels, sizes = kernels.label_components(m, connectivity)
    best = int(np.argmax(sizes[1:])) + 1
    return labels == best


def extreme_points(mask) -> Extremes:
    m = as_mask(mask)
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        raise EmptyRegionError("mask has no set pixels")
    # np.nonzero is raster ordered, so lexsort keys give the smaller-other-coordinate tie-break.
    by_x = np.lexsort((ys, xs))
    by_y = np.lexsort((xs, ys))
    xmax = xs.max()
    ymax = ys.max()
    right_ys = ys[xs == xmax]
    bottom_xs = xs[ys == ymax]
    return Extremes(
        left=(int(xs[by_x[0]]), int(ys[by_x[0]])),
        right=(int(xmax), int(right_ys.min())),
        top=(int(xs[by_y[0]]), int(ys[by_y[0]])),
        bottom=(int(bottom_xs.min()), int(ymax)),
    )


def crop_box(image, threshold: float = DEFAULT_THRESHOLD, margin: int = 0, connectivity: int = 8):
    """Inclusive crop rectangle ``(x0, y0, x1, y1)``, or None when nothing is above threshold."""
    img = as_image(image)
    fg = binarize(gaussian_filter(img, PRE_BLUR_SIGMA), threshold)
    blob = largest_component(fg, connectivity)
    if not blob.any():
        return None
    # The blur only picks the component; its extremes come from the unblurred pixels,
    # otherwise every edge grows by about one pixel.
    raw = blob & (img > threshold)
    x0, y0, x1, y1 = extreme_points(raw if raw.any() else blob).box
    h, w = img.shape
    return max(0, x0 - margin), max(0, y0 - margin), min(w - 1, x1 + margin), min(h - 1, y1 + margin)


def crop_to_brain(
    image,
    margin: int = 0,
    out_size: int = NETWORK_SIZE,
    threshold: float = DEFAULT_THRESHOLD,
    connectivity: int = 8,
) -> np.ndarray:
    """Crop to the largest bright blob and resize to ``out_size`` square.

    An image with no foreground is resized whole and a warning is logged.
    """
    img = as_image(image)
    box = crop_box(img, threshold, margin, connectivity)
    if box is None:
        log.warning("crop: no foreground above threshold %.4f; using full frame", threshold)
        return resize_bilinear(img, out_size, out_size)
    x0, y0, x1, y1 = box
    return resize_bilinear(img[y0 : y1 + 1, x0 : x1 + 1], out_size, out_size)
