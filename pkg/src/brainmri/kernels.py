"""Backend selection for the hot loops.

The compiled extension is used when it was built; setting
``BRAINMRI_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("BRAINMRI_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced by environment")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name=None):
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def window_distances(image, ref_y, ref_x, bs, y0, y1, x0, x1, backend=None):
    """Mean squared difference between the block at (ref_y, ref_x) and every block whose
    top-left lies in the inclusive window [y0, y1] x [x0, x1]."""
    img = np.ascontiguousarray(image, dtype=np.float64)
    h, w = img.shape
    if not (0 <= y0 <= y1 and y1 + bs <= h and 0 <= x0 <= x1 and x1 + bs <= w):
        raise ValueError(f"search window [{y0}, {y1}] x [{x0}, {x1}] leaves the {h}x{w} image")
    if not (0 <= ref_y <= h - bs and 0 <= ref_x <= w - bs):
        raise ValueError(f"reference block ({ref_y}, {ref_x}) leaves the image")
    return get_backend(backend).window_distances(img, ref_y, ref_x, bs, y0, y1, x0, x1)


def label_components(mask, connectivity=8, backend=None):
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    return get_backend(backend).label_components(m, connectivity)


def channel_stats(x, backend=None):
    """Per-channel mean and biased variance of a channels-last array."""
    flat = np.ascontiguousarray(x, dtype=np.float64).reshape(-1, x.shape[-1])
    return get_backend(backend).channel_stats(flat)


def bn_relu_pool_forward(x, mean, inv_std, gamma, beta, size, backend=None):
    return get_backend(backend).bn_relu_pool_forward(
        np.ascontiguousarray(x), np.ascontiguousarray(mean), np.ascontiguousarray(inv_std),
        np.ascontiguousarray(gamma), np.ascontiguousarray(beta), int(size),
    )


def bn_relu_pool_backward(grad, arg, x, mean, inv_std, gamma, size, batch_stats, backend=None):
    return get_backend(backend).bn_relu_pool_backward(
        np.ascontiguousarray(grad), np.ascontiguousarray(arg), np.ascontiguousarray(x),
        np.ascontiguousarray(mean), np.ascontiguousarray(inv_std), np.ascontiguousarray(gamma),
        int(size), bool(batch_stats),
    )


def im2col(xp, kh, kw, stride, ho, wo, backend=None):
    """Patch matrix of a padded NHWC array, rows = output positions, columns = (kh, kw, C)."""
    return get_backend(backend).im2col(np.ascontiguousarray(xp, dtype=np.float64), kh, kw, stride, ho, wo)


def col2im(dcols, shape, kh, kw, stride, ho, wo, backend=None):
    n, hp, wp, c = shape
    return get_backend(backend).col2im(np.ascontiguousarray(dcols), n, hp, wp, c, kh, kw, stride, ho, wo)
