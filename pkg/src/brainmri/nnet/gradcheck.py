"""Central finite-difference gradient checks for layers."""
from __future__ import annotations

import numpy as np


def relative_error(analytic, numeric, floor: float = 1e-7) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / den)) if a.size else 0.0


def check_layer(layer, x, seed: int = 0, eps: float = 1e-5, training: bool = True, rng_seed=None) -> dict[str, float]:
    """Compare ``layer.backward`` with central differences of ``sum(forward(x) * r)``.

    Returns the max relative error for the input (key ``"x"``) and every parameter.
    ``rng_seed`` feeds a fresh generator to each forward call (for Dropout).
    """
    def run(inp):
        rng = None if rng_seed is None else np.random.default_rng(rng_seed)
        return layer.forward(inp, training=training, rng=rng)

    x = np.array(x, dtype=np.float64)
    out = run(x)
    r = np.random.default_rng([seed, 7]).standard_normal(out.shape)
    dx = layer.backward(r)
    analytic = {"x": dx, **{k: v.copy() for k, v in layer.grads.items()}}

    def loss():
        return float(np.sum(run(x) * r))

    errors = {}
    targets = {"x": x, **layer.params}
    for name, arr in targets.items():
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss()
            flat[i] = old - eps
            down = loss()
            flat[i] = old
            nflat[i] = (up - down) / (2 * eps)
        errors[name] = relative_error(analytic[name], num)
    return errors
