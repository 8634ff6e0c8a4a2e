"""Total-variation (ROF) denoising with Chambolle's dual projection."""
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from ..imgcore import as_image


@dataclass(frozen=True)
class TvParams:
    weight: float = 0.1
    max_iters: int = 200
    tol: float = 1e-4

    def __post_init__(self):
        if not self.weight > 0:
            raise ArgumentError(f"weight must be > 0, got {self.weight}")
        if self.max_iters < 1:
            raise ArgumentError(f"max_iters must be >= 1, got {self.max_iters}")


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px, py):
    # Negative adjoint of _grad.
    d = np.zeros_like(px)
    d[:, :-1] += px[:, :-1]
    d[:, 1:] -= px[:, :-1]
    d[:-1, :] += py[:-1, :]
    d[1:, :] -= py[:-1, :]
    return d


def tv_energy(candidate, observed, weight: float) -> float:
    """0.5 * ||u - f||^2 + weight * sum sqrt(dx^2 + dy^2) with forward differences."""
    u = as_image(candidate)
    f = as_image(observed)
    if u.shape != f.shape:
        raise ArgumentError(f"dimension mismatch {u.shape} vs {f.shape}")
    gx, gy = _grad(u)
    return 0.5 * float(np.sum((u - f) ** 2)) + weight * float(np.sum(np.sqrt(gx * gx + gy * gy)))


def tv_denoise(observed, params: TvParams = TvParams()) -> np.ndarray:
    f = as_image(observed)
    lam = params.weight
    tau = 0.25
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    for _ in range(params.max_iters):
        gx, gy = _grad(_div(px, py) - f / lam)
        norm = 1.0 + tau * np.sqrt(gx * gx + gy * gy)
        px_new = (px + tau * gx) / norm
        py_new = (py + tau * gy) / norm
        change = max(np.max(np.abs(px_new - px)), np.max(np.abs(py_new - py)))
        px, py = px_new, py_new
        if change < params.tol:
            break
    return f - lam * _div(px, py)
