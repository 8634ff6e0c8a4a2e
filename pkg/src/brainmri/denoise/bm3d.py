"""Two-stage BM3D: hard-thresholded collaborative filtering, then empirical Wiener."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import kernels
from ..errors import ArgumentError
from ..imgcore import as_image

# Match thresholds are quoted as squared distances per pixel on a 0..255 scale.
_SCALE = 255.0 * 255.0


@dataclass(frozen=True)
class Bm3dProfile:
    sigma: float
    block_size: int = 8
    search_window: int = 39
    max_group_size: int = 16
    step: int = 3
    match_threshold_stage1: float = 2500.0
    match_threshold_stage2: float = 400.0
    hard_threshold_multiplier: float = 2.7
    kaiser_beta: float = 2.0

    def __post_init__(self):
        if self.block_size not in (4, 8, 16):
            raise ArgumentError(f"block_size must be 4, 8 or 16, got {self.block_size}")
        if self.search_window % 2 == 0 or self.search_window <= self.block_size:
            raise ArgumentError("search_window must be odd and larger than block_size")
        g = self.max_group_size
        if g < 1 or g & (g - 1):
            raise ArgumentError(f"max_group_size must be a power of two, got {g}")
        if self.step < 1:
            raise ArgumentError(f"step must be >= 1, got {self.step}")

    @property
    def tau1(self) -> float:
        return self.match_threshold_stage1 / _SCALE

    @property
    def tau2(self) -> float:
        return self.match_threshold_stage2 / _SCALE


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; coefficients are ``D @ x``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    d[0, :] = np.sqrt(1.0 / n)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def haar_matrix(n: int) -> np.ndarray:
    """Orthonormal Haar transform for a power-of-two length."""
    if n == 1:
        h = np.ones((1, 1))
    else:
        half = haar_matrix(n // 2)
        top = np.kron(half, [1.0, 1.0])
        bottom = np.kron(np.eye(n // 2), [1.0, -1.0])
        h = np.vstack([top, bottom]) / np.sqrt(2.0)
    h.setflags(write=False)
    return h


def _ref_positions(n: int, bs: int, step: int) -> list[int]:
    pos = list(range(0, n - bs + 1, step))
    if pos[-1] != n - bs:
        pos.append(n - bs)
    return pos


def _match(image, ry, rx, bs, half, max_n, tau, backend=None):
    h, w = image.shape
    y0, y1 = max(0, ry - half), min(h - bs, ry + half)
    x0, x1 = max(0, rx - half), min(w - bs, rx + half)
    d = kernels.window_distances(image, ry, rx, bs, y0, y1, x0, x1, backend=backend).ravel()
    nx = x1 - x0 + 1
    ref_idx = (ry - y0) * nx + (rx - x0)
    cand = np.flatnonzero(d <= tau)
    order = cand[np.argsort(d[cand], kind="stable")]
    order = order[order != ref_idx][: max_n - 1]
    idx = np.concatenate([[ref_idx], order])
    return y0 + idx // nx, x0 + idx % nx, d[idx]


def block_match(image, ref_top_left, profile: Bm3dProfile, threshold: float | None = None, backend=None):
    """Blocks similar to the reference, nearest first (reference itself first).

    ``threshold`` is a mean squared distance in intensity units; the stage-1
    threshold of ``profile`` is used when omitted. Returns ``(y, x)`` tuples.
    """
    img = as_image(image)
    ry, rx = (int(v) for v in ref_top_left)
    bs = profile.block_size
    h, w = img.shape
    if not (0 <= ry <= h - bs and 0 <= rx <= w - bs):
        raise ArgumentError(f"reference block at {(ry, rx)} is not inside the {h}x{w} image")
    tau = profile.tau1 if threshold is None else threshold
    ys, xs, _ = _match(img, ry, rx, bs, profile.search_window // 2, profile.max_group_size, tau, backend)
    return list(zip(ys.tolist(), xs.tolist()))


def _block_dct(image: np.ndarray, bs: int) -> np.ndarray:
    d = dct_matrix(bs)
    patches = sliding_window_view(image, (bs, bs))
    return np.einsum("ij,yxjk,lk->yxil", d, patches, d, optimize=True)


def _pow2_floor(n: int) -> int:
    return 1 << (n.bit_length() - 1)


def _stage(noisy, guide, profile: Bm3dProfile, wiener: bool, backend=None) -> np.ndarray:
    bs = profile.block_size
    sigma = profile.sigma
    h, w = noisy.shape
    d = dct_matrix(bs)
    noisy_coef = _block_dct(noisy, bs)
    guide_coef = _block_dct(guide, bs) if wiener else None
    match_img = guide if wiener else noisy
    tau = profile.tau2 if wiener else profile.tau1
    thr = profile.hard_threshold_multiplier * sigma
    win = np.outer(np.kaiser(bs, profile.kaiser_beta), np.kaiser(bs, profile.kaiser_beta))
    num = np.zeros_like(noisy)
    den = np.zeros_like(noisy)
    half = profile.search_window // 2
    sigma2 = sigma * sigma

    for ry in _ref_positions(h, bs, profile.step):
        for rx in _ref_positions(w, bs, profile.step):
            ys, xs, _ = _match(match_img, ry, rx, bs, half, profile.max_group_size, tau, backend)
            n = _pow2_floor(len(ys))
            ys, xs = ys[:n], xs[:n]
            haar = haar_matrix(n)
            spec = haar @ noisy_coef[ys, xs].reshape(n, -1)
            if wiener:
                basic = haar @ guide_coef[ys, xs].reshape(n, -1)
                b2 = basic * basic
                shrink = b2 / (b2 + sigma2)
                spec = spec * shrink
                energy = float(np.sum(shrink * shrink))
            else:
                spec = np.where(np.abs(spec) > thr, spec, 0.0)
                energy = float(np.count_nonzero(spec))
            weight = 1.0 / energy if energy > 0 else 1.0
            blocks = (haar.T @ spec).reshape(n, bs, bs)
            blocks = np.einsum("ji,njk,kl->nil", d, blocks, d, optimize=True)
            wwin = weight * win
            for k in range(n):
                y, x = ys[k], xs[k]
                num[y : y + bs, x : x + bs] += wwin * blocks[k]
                den[y : y + bs, x : x + bs] += wwin
    return num / den


def bm3d(noisy, profile: Bm3dProfile, backend=None) -> np.ndarray:
    """Denoise with both BM3D stages; ``profile.sigma`` is the known noise std."""
    img = as_image(noisy)
    if not profile.sigma > 0:
        raise ArgumentError(f"sigma must be > 0, got {profile.sigma}")
    if min(img.shape) < profile.block_size:
        raise ArgumentError(f"image {img.shape} smaller than block size {profile.block_size}")
    img = np.ascontiguousarray(img)
    basic = _stage(img, None, profile, wiener=False, backend=backend)
    return _stage(img, np.ascontiguousarray(basic), profile, wiener=True, backend=backend)
