"""Layers with explicit forward/backward passes on channels-last (NHWC) float64 arrays.

Each layer caches what its backward pass needs during ``forward``; ``backward``
takes the upstream gradient, fills ``grads`` and returns the input gradient.
"""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..errors import ArgumentError, NumericError


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.frozen = False

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def config(self) -> dict:
        return {}


def _wmat(w):
    """(F, C, kh, kw) weights as an (F, kh * kw * C) matrix matching ``_im2col``."""
    return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)


def _out_size(h, w, kh, kw, stride, pad):
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ArgumentError("kernel larger than padded input")
    return ho, wo


def _pad_hw(x, pad):
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x


def conv2d_nhwc(x, w, b, stride=1, pad=0):
    """Cross-correlation of ``x`` (N, H, W, C) with ``w`` (F, C, kh, kw); returns (out, cols)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[1]:
        raise ArgumentError(f"incompatible shapes: input {x.shape}, weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise ArgumentError(f"bias shape {b.shape} does not match {w.shape[0]} filters")
    n, h, wd, _ = x.shape
    f, _, kh, kw = w.shape
    ho, wo = _out_size(h, wd, kh, kw, stride, pad)
    cols = kernels.im2col(_pad_hw(x, pad), kh, kw, stride, ho, wo)
    out = cols @ _wmat(w).T
    out += b
    return out.reshape(n, ho, wo, f), cols


def conv2d_nhwc_backward(grad, cols, x_shape, w, stride=1, pad=0):
    """Return ``(dx, dw, db)`` for ``conv2d_nhwc``; ``grad`` is (N, Ho, Wo, F)."""
    n, h, wd, c = x_shape
    f, _, kh, kw = w.shape
    ho, wo = grad.shape[1], grad.shape[2]
    g = grad.reshape(-1, f)
    dw = (g.T @ cols).reshape(f, kh, kw, c).transpose(0, 3, 1, 2)
    db = g.sum(axis=0)
    dxp = kernels.col2im(g @ _wmat(w), (n, h + 2 * pad, wd + 2 * pad, c), kh, kw, stride, ho, wo)
    dx = dxp[:, pad : pad + h, pad : pad + wd, :] if pad else dxp
    return dx, dw, db


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (F, C, kh, kw) -> (N, F, Ho, Wo)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ArgumentError(f"expected (N, C, H, W) input, got {x.shape}")
    out, _ = conv2d_nhwc(x.transpose(0, 2, 3, 1), w, b, stride, pad)
    return out.transpose(0, 3, 1, 2)


def conv2d_backward(grad, x, w, stride=1, pad=0):
    """Return ``(dx, dw, db)`` for ``conv2d_forward`` in NCHW layout."""
    xh = np.asarray(x, dtype=np.float64).transpose(0, 2, 3, 1)
    _, cols = conv2d_nhwc(xh, w, np.zeros(w.shape[0]), stride, pad)
    dx, dw, db = conv2d_nhwc_backward(grad.transpose(0, 2, 3, 1), cols, xh.shape, w, stride, pad)
    return dx.transpose(0, 3, 1, 2), dw, db


class Conv2D(Layer):
    """Convolution on NHWC activations; weights are stored (F, C, kh, kw)."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, pad=1, rng=None):
        super().__init__()
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * kernel_size * kernel_size
        limit = math.sqrt(6.0 / fan_in)
        rng = np.random.default_rng(0) if rng is None else rng
        self.params["w"] = rng.uniform(-limit, limit, (out_channels, in_channels, kernel_size, kernel_size))
        self.params["b"] = np.zeros(out_channels)

    def forward(self, x, training=False, rng=None):
        out, cols = conv2d_nhwc(x, self.params["w"], self.params["b"], self.stride, self.pad)
        self._cols = cols
        self._shape = x.shape
        return out

    def backward(self, grad, need_input_grad=True):
        w = self.params["w"]
        if not need_input_grad:
            g = grad.reshape(-1, w.shape[0])
            kh, kw = w.shape[2], w.shape[3]
            self.grads["w"] = (g.T @ self._cols).reshape(w.shape[0], kh, kw, w.shape[1]).transpose(0, 3, 1, 2)
            self.grads["b"] = g.sum(axis=0)
            self._cols = None
            return None
        dx, dw, db = conv2d_nhwc_backward(grad, self._cols, self._shape, w, self.stride, self.pad)
        self._cols = None
        self.grads["w"] = dw
        self.grads["b"] = db
        return dx

    def config(self):
        w = self.params["w"]
        return {"in_channels": w.shape[1], "out_channels": w.shape[0], "kernel_size": w.shape[2],
                "stride": self.stride, "pad": self.pad}


class BatchNorm2D(Layer):
    """Per-channel batch normalization over every axis but the last (channels-last)."""

    kind = "batchnorm"

    def __init__(self, channels, momentum=0.9, eps=1e-8):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, training=False, rng=None):
        c = x.shape[-1]
        flat = x.reshape(-1, c)
        # Frozen layers behave as in inference so their running statistics stay fixed.
        if training and not self.frozen:
            if x.shape[0] < 2:
                raise ArgumentError("batch normalization needs a batch of at least 2 in training mode")
            mean = flat.mean(axis=0)
            centred = flat - mean
            var = np.einsum("ij,ij->j", centred, centred) / flat.shape[0]
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
            self._batch_stats = True
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
            centred = flat - mean
            self._batch_stats = False
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = centred
        xhat *= inv_std
        self._xhat = xhat
        self._inv_std = inv_std
        out = xhat * self.params["gamma"]
        out += self.params["beta"]
        return out.reshape(x.shape)

    def backward(self, grad):
        c = grad.shape[-1]
        g = grad.reshape(-1, c)
        xhat = self._xhat
        dgamma = np.einsum("ij,ij->j", g, xhat)
        dbeta = g.sum(axis=0)
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        scale = self.params["gamma"] * self._inv_std
        if not self._batch_stats:
            return (g * scale).reshape(grad.shape)
        m = g.shape[0]
        dx = g - dbeta / m
        dx -= xhat * (dgamma / m)
        dx *= scale
        self._xhat = None
        return dx.reshape(grad.shape)

    def config(self):
        return {"channels": self.params["gamma"].size, "momentum": self.momentum, "eps": self.eps}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class MaxPool2D(Layer):
    """Non-overlapping ``size`` x ``size`` max pooling on NHWC; odd remainders are dropped.

    Ties route the gradient to the first maximal element in row-major window order.
    """

    kind = "maxpool"

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def _views(self, x, ho, wo):
        s = self.size
        v = x[:, : ho * s, : wo * s, :].reshape(x.shape[0], ho, s, wo, s, x.shape[3])
        return [v[:, :, i, :, j, :] for i in range(s) for j in range(s)]

    def forward(self, x, training=False, rng=None):
        s = self.size
        n, h, w, c = x.shape
        ho, wo = h // s, w // s
        if ho < 1 or wo < 1:
            raise ArgumentError(f"input {h}x{w} too small for {s}x{s} pooling")
        views = self._views(x, ho, wo)
        best = views[0].copy()
        arg = np.zeros(best.shape, dtype=np.int8)
        for k, v in enumerate(views[1:], start=1):
            better = v > best
            np.copyto(best, v, where=better)
            arg[better] = k
        self._arg = arg
        self._shape = x.shape
        return best

    def backward(self, grad):
        n, h, w, c = self._shape
        ho, wo = grad.shape[1], grad.shape[2]
        dx = np.zeros(self._shape)
        for k, v in enumerate(self._views(dx, ho, wo)):
            np.copyto(v, grad, where=self._arg == k)
        return dx

    def config(self):
        return {"size": self.size}


class GlobalAveragePool(Layer):
    """(N, H, W, C) -> (N, C) spatial mean."""

    kind = "gap"

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        n, h, w, c = self._shape
        return np.broadcast_to((grad / (h * w))[:, None, None, :], self._shape).copy()


class BNReLUPool(Layer):
    """Batch norm -> ReLU -> max pool evaluated as one fused kernel.

    Produces the same values as the three separate layers (``relu`` commutes
    with ``max``); parameters and running statistics match ``BatchNorm2D``.
    """

    kind = "bn_relu_pool"

    def __init__(self, channels, size=2, momentum=0.9, eps=1e-8):
        super().__init__()
        self.size = size
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, training=False, rng=None):
        n, h, w, _ = x.shape
        if h // self.size < 1 or w // self.size < 1:
            raise ArgumentError(f"input {h}x{w} too small for {self.size}x{self.size} pooling")
        if training and not self.frozen:
            if n < 2:
                raise ArgumentError("batch normalization needs a batch of at least 2 in training mode")
            mean, var = kernels.channel_stats(x)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
            self._batch_stats = True
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
            self._batch_stats = False
        inv_std = 1.0 / np.sqrt(var + self.eps)
        out, arg = kernels.bn_relu_pool_forward(x, mean, inv_std, self.params["gamma"], self.params["beta"], self.size)
        self._cache = (x, mean, inv_std, arg)
        return out

    def backward(self, grad):
        x, mean, inv_std, arg = self._cache
        dx, dgamma, dbeta = kernels.bn_relu_pool_backward(
            grad, arg, x, mean, inv_std, self.params["gamma"], self.size, self._batch_stats
        )
        self._cache = None
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        return dx

    def config(self):
        return {"channels": self.params["gamma"].size, "size": self.size, "momentum": self.momentum, "eps": self.eps}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.2):
        super().__init__()
        if not 0 <= rate < 1:
            raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0:
            self._scale = None
            return x
        if rng is None:
            raise ArgumentError("training-mode dropout needs a seeded generator")
        keep = rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, grad):
        return grad if self._scale is None else grad * self._scale

    def config(self):
        return {"rate": self.rate}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        limit = math.sqrt(6.0 / in_features)
        self.params["w"] = rng.uniform(-limit, limit, (in_features, out_features))
        self.params["b"] = np.zeros(out_features)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.params["w"].shape[0]:
            raise ArgumentError(f"dense input {x.shape} incompatible with weights {self.params['w'].shape}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad):
        self.grads["w"] = self._x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["w"].T

    def config(self):
        w = self.params["w"]
        return {"in_features": w.shape[0], "out_features": w.shape[1]}


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction; accepts a vector or a (batch, classes) array."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logit")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


LOG_CLAMP = 1e-12


def cce_loss(probs, onehot) -> float:
    """Mean over the batch of ``-sum(y * log(p))`` with ``log`` clamped at 1e-12."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_2d(np.asarray(onehot, dtype=np.float64))
    if p.shape != y.shape:
        raise ArgumentError(f"shape mismatch {p.shape} vs {y.shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise ArgumentError("targets must be one-hot rows")
    return float(np.mean(-np.sum(y * np.log(np.maximum(p, LOG_CLAMP)), axis=1)))


def cce_softmax_grad(probs, onehot) -> np.ndarray:
    """Gradient of the mean CCE with respect to the logits feeding ``softmax``."""
    p = np.atleast_2d(probs)
    return (p - onehot) / p.shape[0]


def one_hot(labels, num_classes: int) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.intp)
    out = np.zeros((lab.size, num_classes))
    out[np.arange(lab.size), lab] = 1.0
    return out


LAYER_TYPES = {
    cls.kind: cls
    for cls in (Conv2D, BatchNorm2D, BNReLUPool, ReLU, MaxPool2D, GlobalAveragePool, Dropout, Dense)
}
