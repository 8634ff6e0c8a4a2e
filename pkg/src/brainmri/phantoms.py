"""Seeded synthetic images used for verification and demos."""
from __future__ import annotations

import os

import numpy as np

from .imgcore import NETWORK_SIZE, save_pgm
from .metrics import CLASS_NAMES


def _grid(h, w):
    y, x = np.mgrid[0:h, 0:w]
    return y.astype(np.float64), x.astype(np.float64)


def geometric_phantom(size: int = 128) -> np.ndarray:
    """Piecewise-constant shapes at 0.2/0.5/0.8 spanning large areas down to thin bars and small dots."""
    n = size
    s = n / 128.0
    y, x = _grid(n, n)
    img = np.full((n, n), 0.2)
    r2 = (x - 40 * s) ** 2 + (y - 44 * s) ** 2
    img[r2 < (24 * s) ** 2] = 0.5
    img[(r2 < (16 * s) ** 2) & (r2 >= (11 * s) ** 2)] = 0.8
    img[int(78 * s) : int(112 * s), int(14 * s) : int(60 * s)] = 0.8
    for k in range(5):
        y0 = int((82 + 6 * k) * s)
        img[y0 : y0 + 2, int(18 * s) : int(56 * s)] = 0.5
    diamond = np.abs(x - 95 * s) + np.abs(y - 36 * s)
    img[diamond < 20 * s] = 0.8
    img[diamond < 10 * s] = 0.5
    for i, r in enumerate((2, 3, 4, 5, 6)):
        cx, cy = (75 + 10 * i) * s, (90 + (i % 2) * 14) * s
        img[(x - cx) ** 2 + (y - cy) ** 2 <= (r * s) ** 2] = 0.8 if i % 2 else 0.5
    img[int(20 * s) : int(70 * s), int(68 * s) : int(70 * s)] = 0.8
    return img


def noisy_geometric_phantom(sigma: float = 25 / 255, seed: int = 0, size: int = 128):
    """``(clean, noisy)`` with additive Gaussian noise (not clipped)."""
    clean = geometric_phantom(size)
    return clean, clean + np.random.default_rng(seed).normal(0, sigma, clean.shape)


def bias_phantom(size: int = 150, amplitude: float = 0.3):
    """Two-tissue disk (0.4 / 0.8) times ``exp(amplitude * sin(pi x/W) sin(pi y/H))``.

    Returns ``(clean, biased, mask, true_log_field, inner_tissue)``.
    """
    n = size
    y, x = _grid(n, n)
    r = np.hypot(x - (n - 1) / 2, y - (n - 1) / 2)
    mask = r < 0.45 * n
    inner = mask & ((r < 0.25 * n) | ((x - 0.3 * n) ** 2 + (y - 0.7 * n) ** 2 < (0.08 * n) ** 2))
    clean = np.where(mask, 0.4, 0.0)
    clean[inner] = 0.8
    field = amplitude * np.sin(np.pi * x / n) * np.sin(np.pi * y / n)
    return clean, clean * np.exp(field), mask, field, inner


def head_phantom(seed: int, size: int = 150, noise: float = 0.03):
    """Bright brain disk with dark holes inside a thin skull annulus on black.

    Returns ``(image, true_brain_mask, hole_mask)``.
    """
    rng = np.random.default_rng(seed)
    n = size
    y, x = _grid(n, n)
    cy = (n - 1) / 2 + rng.uniform(-4, 4)
    cx = (n - 1) / 2 + rng.uniform(-4, 4)
    brain_r = rng.uniform(0.27, 0.31) * n
    gap = rng.uniform(0.03, 0.05) * n
    thick = rng.uniform(0.02, 0.035) * n
    r = np.hypot(x - cx, y - cy)
    brain = r <= brain_r
    skull = (r >= brain_r + gap) & (r <= brain_r + gap + thick)
    img = np.zeros((n, n))
    img[brain] = rng.uniform(0.55, 0.7)
    img[skull] = rng.uniform(0.85, 0.95)
    holes = np.zeros_like(brain)
    for _ in range(int(rng.integers(3, 7))):
        ang = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(0, brain_r - 10)
        hy, hx = cy + rad * np.sin(ang), cx + rad * np.cos(ang)
        hr = rng.uniform(1.5, 3.0)
        holes |= (x - hx) ** 2 + (y - hy) ** 2 <= hr * hr
    holes &= brain
    img[holes] = 0.02
    img = np.clip(img + rng.normal(0, noise, img.shape) * (img > 0), 0.0, 1.0)
    return img, brain, holes


def _brain_background(rng, n):
    y, x = _grid(n, n)
    cy = (n - 1) / 2 + rng.uniform(-3, 3)
    cx = (n - 1) / 2 + rng.uniform(-3, 3)
    ry, rx = rng.uniform(0.40, 0.46) * n, rng.uniform(0.36, 0.42) * n
    inside = ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1
    img = np.where(inside, rng.uniform(0.3, 0.4), 0.0)
    return img, inside, y, x, (cy, cx, ry, rx)


def _lesion_centre(rng, geom, margin):
    cy, cx, ry, rx = geom
    ang = rng.uniform(0, 2 * np.pi)
    rad = rng.uniform(0, 1) ** 0.5
    return cy + rad * max(ry - margin, 0) * np.sin(ang), cx + rad * max(rx - margin, 0) * np.cos(ang)


def lesion_image(label: int, rng, size: int = NETWORK_SIZE, noise: float = 0.03) -> np.ndarray:
    """Brain-like ellipse carrying class-specific bright structures.

    0 filled disks, 1 thin rings, 2 nothing, 3 scattered small dots.
    """
    n = size
    img, inside, y, x, geom = _brain_background(rng, n)
    bright = rng.uniform(0.8, 0.95)
    lesion = np.zeros_like(inside)
    if label == 0:
        for _ in range(int(rng.integers(2, 5))):
            r = rng.uniform(0.06, 0.09) * n
            ly, lx = _lesion_centre(rng, geom, r)
            lesion |= (x - lx) ** 2 + (y - ly) ** 2 <= r * r
    elif label == 1:
        for _ in range(int(rng.integers(2, 5))):
            r = rng.uniform(0.06, 0.09) * n
            t = rng.uniform(0.015, 0.022) * n
            ly, lx = _lesion_centre(rng, geom, r + t)
            d = np.hypot(x - lx, y - ly)
            lesion |= (d <= r + t) & (d >= r)
    elif label == 3:
        for _ in range(int(rng.integers(10, 20))):
            r = rng.uniform(0.012, 0.022) * n
            ly, lx = _lesion_centre(rng, geom, r)
            lesion |= (x - lx) ** 2 + (y - ly) ** 2 <= r * r
    img[lesion & inside] = bright
    img = img + rng.normal(0, noise, img.shape) * inside
    return np.clip(img, 0.0, 1.0)


def lesion_dataset(per_class: int = 200, seed: int = 0, size: int = NETWORK_SIZE, num_classes: int = 4):
    """``(images, labels)`` with ``per_class`` images per class, deterministic in ``seed``."""
    images, labels = [], []
    for label in range(num_classes):
        for i in range(per_class):
            rng = np.random.default_rng([seed, label, i])
            images.append(lesion_image(label, rng, size))
            labels.append(label)
    return np.stack(images), np.asarray(labels)


def texture_image(label: int, rng, size: int = NETWORK_SIZE) -> np.ndarray:
    """Source-task images: 0 horizontal bars, 1 vertical bars, 2 checkerboard, 3 blobs."""
    n = size
    y, x = _grid(n, n)
    period = rng.uniform(8, 14)
    phase = rng.uniform(0, period)
    if label == 0:
        img = ((y + phase) % period < period / 2).astype(float)
    elif label == 1:
        img = ((x + phase) % period < period / 2).astype(float)
    elif label == 2:
        img = (((y + phase) % period < period / 2) ^ ((x + phase) % period < period / 2)).astype(float)
    else:
        img = np.zeros((n, n))
        for _ in range(int(rng.integers(6, 12))):
            cy, cx = rng.uniform(0, n, 2)
            r = rng.uniform(4, 10)
            img[(x - cx) ** 2 + (y - cy) ** 2 <= r * r] = 1.0
    img = 0.2 + 0.6 * img + rng.normal(0, 0.05, (n, n))
    return np.clip(img, 0.0, 1.0)


def texture_dataset(per_class: int = 100, seed: int = 1000, size: int = NETWORK_SIZE):
    images, labels = [], []
    for label in range(4):
        for i in range(per_class):
            images.append(texture_image(label, np.random.default_rng([seed, label, i]), size))
            labels.append(label)
    return np.stack(images), np.asarray(labels)


def scan_image(label: int, rng, size: int = 200, noise: float = 0.02) -> np.ndarray:
    """Un-cropped scan: a ``lesion_image`` head placed off-centre on a larger black field."""
    inner = int(rng.integers(round(0.55 * size), round(0.7 * size)))
    head = lesion_image(label, rng, inner, noise)
    canvas = np.zeros((size, size))
    oy, ox = rng.integers(5, size - inner - 5, 2)
    canvas[oy : oy + inner, ox : ox + inner] = head
    return canvas


def write_dataset_tree(root, per_class, seed: int = 0, size: int = 200, empty_ok: bool = True) -> dict[str, int]:
    """Write ``root/<class>/scan_XXXX.pgm`` files; ``per_class`` is an int or a dict of counts."""
    counts = per_class if isinstance(per_class, dict) else {c: per_class for c in CLASS_NAMES}
    for label, cls in enumerate(CLASS_NAMES):
        d = os.path.join(root, cls)
        os.makedirs(d, exist_ok=True)
        for i in range(counts.get(cls, 0)):
            rng = np.random.default_rng([seed, label, i])
            save_pgm(scan_image(label, rng, size), os.path.join(d, f"scan_{i:04d}.pgm"))
    return counts
