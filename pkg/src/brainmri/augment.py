"""Geometric augmentation (rotation, flips, shifts) and offline class balancing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .imgcore import as_image

_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class AugmentConfig:
    rotation_range: float = 15.0
    width_shift: float = 0.1
    height_shift: float = 0.1
    hflip: bool = True
    vflip: bool = True
    fill: str = "zero"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rotation_range <= 180:
            raise ArgumentError(f"rotation_range must be in [0, 180], got {self.rotation_range}")
        for name in ("width_shift", "height_shift"):
            if not 0 <= getattr(self, name) <= 0.5:
                raise ArgumentError(f"{name} must be in [0, 0.5]")
        if self.fill not in ("zero", "reflect"):
            raise ArgumentError(f"fill must be 'zero' or 'reflect', got {self.fill!r}")


def flip_h(image) -> np.ndarray:
    return as_image(image)[:, ::-1].copy()


def flip_v(image) -> np.ndarray:
    return as_image(image)[::-1, :].copy()


def _reflect_coords(c: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(c)
    period = 2 * (n - 1)
    c = np.mod(c, period)
    return np.where(c > n - 1, period - c, c)


def sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, fill: str) -> np.ndarray:
    """Bilinear lookup at real coordinates; out-of-frame samples follow ``fill``."""
    h, w = img.shape
    if fill == "reflect":
        ys = _reflect_coords(ys, h)
        xs = _reflect_coords(xs, w)
        inside = np.ones(ys.shape, dtype=bool)
    else:
        inside = (ys >= -_EDGE_TOL) & (ys <= h - 1 + _EDGE_TOL) & (xs >= -_EDGE_TOL) & (xs <= w - 1 + _EDGE_TOL)
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(h - 2, 0))
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    out = (
        img[y0, x0] * (1 - fy) * (1 - fx)
        + img[y0, x1] * (1 - fy) * fx
        + img[y1, x0] * fy * (1 - fx)
        + img[y1, x1] * fy * fx
    )
    return np.where(inside, out, 0.0)


def rotate(image, angle: float, fill: str = "zero") -> np.ndarray:
    """Rotate counter-clockwise (as displayed, y pointing down) about the image centre."""
    img = as_image(image)
    if angle == 0:
        return img.copy()
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle)
    c, s = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # Inverse map: output pixel -> source location.
    src_x = cx + c * dx - s * dy
    src_y = cy + s * dx + c * dy
    return sample_bilinear(img, src_y, src_x, fill)


def shift(image, dx: float, dy: float, fill: str = "zero") -> np.ndarray:
    """Translate content by ``(dx * W, dy * H)`` pixels (positive = right/down)."""
    if abs(dx) > 0.5 or abs(dy) > 0.5:
        raise ArgumentError(f"shift fractions must be within [-0.5, 0.5], got {(dx, dy)}")
    img = as_image(image)
    if dx == 0 and dy == 0:
        return img.copy()
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return sample_bilinear(img, yy - dy * h, xx - dx * w, fill)


def draw_params(config: AugmentConfig, draw_index: int) -> dict:
    """Random transform parameters for one draw; a pure function of ``(seed, draw_index)``."""
    rng = np.random.default_rng([config.seed & 0xFFFFFFFFFFFFFFFF, int(draw_index)])
    u = rng.random(5)
    return {
        "angle": (2 * u[0] - 1) * config.rotation_range,
        "dx": (2 * u[1] - 1) * config.width_shift,
        "dy": (2 * u[2] - 1) * config.height_shift,
        "hflip": bool(config.hflip and u[3] < 0.5),
        "vflip": bool(config.vflip and u[4] < 0.5),
    }


def augment_sample(image, config: AugmentConfig, draw_index: int) -> np.ndarray:
    """Apply rotate -> shift -> flips with parameters from ``draw_params``."""
    p = draw_params(config, draw_index)
    out = rotate(image, p["angle"], config.fill)
    out = shift(out, p["dx"], p["dy"], config.fill)
    if p["hflip"]:
        out = flip_h(out)
    if p["vflip"]:
        out = flip_v(out)
    return out


def balance_classes(counts_by_class: dict[str, int], target: int) -> dict[str, int]:
    """Number of synthetic samples each class needs to reach ``target``."""
    if counts_by_class and target < max(counts_by_class.values()):
        raise ArgumentError(f"target {target} is below the largest class count {max(counts_by_class.values())}")
    return {cls: target - n for cls, n in counts_by_class.items()}


def plan_sources(num_sources: int, num_synthetic: int) -> list[tuple[int, int]]:
    """Round-robin ``(source_index, k)`` pairs; ``k`` numbers the draws per source."""
    if num_synthetic and num_sources < 1:
        raise ArgumentError("cannot augment a class with no source images")
    return [(i % num_sources, i // num_sources) for i in range(num_synthetic)]
