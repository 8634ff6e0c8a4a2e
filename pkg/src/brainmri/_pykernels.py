"""Pure-Python/numpy versions of the compiled kernels in ``_ckernels.pyx``."""
from collections import deque

import numpy as np

_N4 = ((-1, 0), (0, -1), (0, 1), (1, 0))
_N8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def window_distances(image, ref_y, ref_x, bs, y0, y1, x0, x1):
    ny, nx = y1 - y0 + 1, x1 - x0 + 1
    acc = np.zeros((ny, nx), dtype=np.float64)
    # Same accumulation order as the C loop so both backends agree bit-for-bit.
    for i in range(bs):
        for j in range(bs):
            diff = image[y0 + i : y0 + i + ny, x0 + j : x0 + j + nx] - image[ref_y + i, ref_x + j]
            acc += diff * diff
    return acc / float(bs * bs)


def label_components(mask, connectivity):
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    offsets = _N4 if connectivity == 4 else _N8
    sizes = [0]
    current = 0
    m = mask.astype(bool)
    for y, x in zip(*np.nonzero(m)):
        if labels[y, x]:
            continue
        current += 1
        labels[y, x] = current
        queue = deque([(y, x)])
        count = 0
        while queue:
            py, px = queue.popleft()
            count += 1
            for dy, dx in offsets:
                qy, qx = py + dy, px + dx
                if 0 <= qy < h and 0 <= qx < w and m[qy, qx] and not labels[qy, qx]:
                    labels[qy, qx] = current
                    queue.append((qy, qx))
        sizes.append(count)
    return labels, np.asarray(sizes, dtype=np.int64)


def channel_stats(x):
    mean = x.mean(axis=0)
    centred = x - mean
    return mean, np.einsum("ij,ij->j", centred, centred) / x.shape[0]


def _pool_views(x, size, ho, wo):
    v = x[:, : ho * size, : wo * size, :].reshape(x.shape[0], ho, size, wo, size, x.shape[3])
    return [v[:, :, i, :, j, :] for i in range(size) for j in range(size)]


def bn_relu_pool_forward(x, mean, inv_std, gamma, beta, size):
    a = gamma * inv_std
    s = beta - a * mean
    n, h, w, c = x.shape
    ho, wo = h // size, w // size
    views = _pool_views(x, size, ho, wo)
    best = a * views[0] + s
    arg = np.zeros(best.shape, dtype=np.int8)
    for k, v in enumerate(views[1:], start=1):
        y = a * v + s
        better = y > best
        np.copyto(best, y, where=better)
        arg[better] = k
    dead = best <= 0
    best[dead] = 0.0
    arg[dead] = -1
    return best, arg


def bn_relu_pool_backward(grad, arg, x, mean, inv_std, gamma, size, batch_stats):
    n, h, w, c = x.shape
    ho, wo = grad.shape[1], grad.shape[2]
    dy = np.zeros_like(x)
    for k, v in enumerate(_pool_views(dy, size, ho, wo)):
        np.copyto(v, grad, where=arg == k)
    flat = dy.reshape(-1, c)
    xhat = (x.reshape(-1, c) - mean) * inv_std
    dbeta = flat.sum(axis=0)
    dgamma = np.einsum("ij,ij->j", flat, xhat)
    scale = gamma * inv_std
    if batch_stats:
        m = flat.shape[0]
        dx = scale * (flat - (dbeta + xhat * dgamma) / m)
    else:
        dx = scale * flat
    return dx.reshape(x.shape), dgamma, dbeta


def im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[3]
    cols = np.empty((n, ho, wo, kh, kw, c))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :]
    return cols.reshape(-1, kh * kw * c)


def col2im(dcols, n, hp, wp, c, kh, kw, stride, ho, wo):
    d = dcols.reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros((n, hp, wp, c))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += d[:, :, :, i, j, :]
    return dxp
