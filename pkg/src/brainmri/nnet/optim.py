"""Adam and a reduce-on-plateau learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns new parameter arrays and mutates ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ArgumentError("params, grads and state must have the same length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ArgumentError(f"shape mismatch for parameter {i}: {p.shape} vs {g.shape}")
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out, state


@dataclass
class ReduceLROnPlateau:
    """Multiply the rate by ``factor`` after ``patience`` epochs without a strict decrease."""

    lr: float
    patience: int = 2
    factor: float = 0.3
    min_lr: float = 1e-6
    best: float = float("inf")
    wait: int = 0
    reductions: list[int] = field(default_factory=list)
    _epoch: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ArgumentError("patience must be >= 1")

    def step(self, value: float) -> float:
        self._epoch += 1
        if value < self.best:
            self.best = value
            self.wait = 0
            return self.lr
        self.wait += 1
        if self.wait >= self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if new_lr < self.lr:
                self.reductions.append(self._epoch)
            self.lr = new_lr
            self.wait = 0
        return self.lr


def reduce_lr_on_plateau(history, patience: int, factor: float, min_lr: float, current_lr: float) -> float:
    """Learning rate after replaying ``history`` (monitored loss per epoch) from ``current_lr``."""
    sched = ReduceLROnPlateau(lr=current_lr, patience=patience, factor=factor, min_lr=min_lr)
    for value in history:
        sched.step(float(value))
    return sched.lr
