# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay bit-compatible with ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def window_distances(const double[:, ::1] image, Py_ssize_t ref_y, Py_ssize_t ref_x,
                     Py_ssize_t bs, Py_ssize_t y0, Py_ssize_t y1,
                     Py_ssize_t x0, Py_ssize_t x1):
    """Mean squared block distance for every top-left in [y0, y1] x [x0, x1]."""
    cdef Py_ssize_t ny = y1 - y0 + 1, nx = x1 - x0 + 1
    out_arr = np.zeros((ny, nx), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t cy, cx, i, j
    cdef double acc, diff
    cdef double norm = <double>(bs * bs)
    with nogil:
        for cy in range(ny):
            for cx in range(nx):
                acc = 0.0
                for i in range(bs):
                    for j in range(bs):
                        diff = image[y0 + cy + i, x0 + cx + j] - image[ref_y + i, ref_x + j]
                        acc = acc + diff * diff
                out[cy, cx] = acc / norm
    return out_arr


def label_components(const cnp.uint8_t[:, ::1] mask, int connectivity):
    """Raster-order component labels (1-based, 0 = background) and per-label sizes."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    queue_arr = np.empty(h * w if h * w > 0 else 1, dtype=np.intp)
    cdef Py_ssize_t[::1] queue = queue_arr
    cdef int dy[8]
    cdef int dx[8]
    cdef int nn
    if connectivity == 4:
        nn = 4
        dy[:4] = [-1, 0, 0, 1]
        dx[:4] = [0, -1, 1, 0]
    else:
        nn = 8
        dy[:8] = [-1, -1, -1, 0, 0, 1, 1, 1]
        dx[:8] = [-1, 0, 1, -1, 1, -1, 0, 1]
    sizes = [0]
    cdef int current = 0
    cdef Py_ssize_t y, x, head, tail, p, py, px, qy, qx, k, count
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0 or labels[y, x] != 0:
                continue
            current += 1
            labels[y, x] = current
            head = 0
            tail = 0
            queue[tail] = y * w + x
            tail += 1
            count = 0
            with nogil:
                while head < tail:
                    p = queue[head]
                    head += 1
                    count += 1
                    py = p // w
                    px = p - py * w
                    for k in range(nn):
                        qy = py + dy[k]
                        qx = px + dx[k]
                        if qy < 0 or qy >= h or qx < 0 or qx >= w:
                            continue
                        if mask[qy, qx] != 0 and labels[qy, qx] == 0:
                            labels[qy, qx] = current
                            queue[tail] = qy * w + qx
                            tail += 1
            sizes.append(count)
    return labels_arr, np.asarray(sizes, dtype=np.int64)


def channel_stats(const double[:, ::1] x):
    """Per-column mean and biased variance of an (M, C) array (two-pass)."""
    cdef Py_ssize_t m = x.shape[0], c = x.shape[1], i, k
    mean_arr = np.zeros(c, dtype=np.float64)
    var_arr = np.zeros(c, dtype=np.float64)
    cdef double[::1] mean = mean_arr
    cdef double[::1] var = var_arr
    cdef double d
    with nogil:
        for i in range(m):
            for k in range(c):
                mean[k] += x[i, k]
        for k in range(c):
            mean[k] /= m
        for i in range(m):
            for k in range(c):
                d = x[i, k] - mean[k]
                var[k] += d * d
        for k in range(c):
            var[k] /= m
    return mean_arr, var_arr


def bn_relu_pool_forward(const double[:, :, :, ::1] x, const double[::1] mean,
                         const double[::1] inv_std, const double[::1] gamma,
                         const double[::1] beta, int size):
    """relu(maxpool(gamma * (x - mean) * inv_std + beta)) with the argmax per window."""
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = h // size, wo = w // size
    out_arr = np.empty((n, ho, wo, c), dtype=np.float64)
    arg_arr = np.empty((n, ho, wo, c), dtype=np.int8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, oy, ox, k, i, j
    cdef double best, y, a, s
    cdef int besti
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for k in range(c):
                        a = gamma[k] * inv_std[k]
                        s = beta[k] - a * mean[k]
                        best = 0.0
                        besti = -1
                        for i in range(size):
                            for j in range(size):
                                y = a * x[b, oy * size + i, ox * size + j, k] + s
                                if besti < 0 or y > best:
                                    best = y
                                    besti = i * size + j
                        if best > 0.0:
                            out[b, oy, ox, k] = best
                            arg[b, oy, ox, k] = besti
                        else:
                            out[b, oy, ox, k] = 0.0
                            arg[b, oy, ox, k] = -1
    return out_arr, arg_arr


def bn_relu_pool_backward(const double[:, :, :, ::1] grad, const cnp.int8_t[:, :, :, ::1] arg,
                          const double[:, :, :, ::1] x, const double[::1] mean,
                          const double[::1] inv_std, const double[::1] gamma,
                          int size, bint batch_stats):
    """Input gradient plus (dgamma, dbeta) for ``bn_relu_pool_forward``."""
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = grad.shape[1], wo = grad.shape[2]
    dx_arr = np.empty((n, h, w, c), dtype=np.float64)
    dgamma_arr = np.zeros(c, dtype=np.float64)
    dbeta_arr = np.zeros(c, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr
    cdef double[::1] dbeta = dbeta_arr
    cdef Py_ssize_t b, oy, ox, k, yy, xx, a
    cdef double g, xhat, m = <double>(n * h * w), scale, cg, cb
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for k in range(c):
                        a = arg[b, oy, ox, k]
                        if a >= 0:
                            g = grad[b, oy, ox, k]
                            yy = oy * size + a // size
                            xx = ox * size + a % size
                            dbeta[k] += g
                            dgamma[k] += g * (x[b, yy, xx, k] - mean[k]) * inv_std[k]
        for b in range(n):
            for yy in range(h):
                for xx in range(w):
                    for k in range(c):
                        scale = gamma[k] * inv_std[k]
                        if batch_stats:
                            xhat = (x[b, yy, xx, k] - mean[k]) * inv_std[k]
                            dx[b, yy, xx, k] = -scale * (dbeta[k] + xhat * dgamma[k]) / m
                        else:
                            dx[b, yy, xx, k] = 0.0
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for k in range(c):
                        a = arg[b, oy, ox, k]
                        if a >= 0:
                            yy = oy * size + a // size
                            xx = ox * size + a % size
                            dx[b, yy, xx, k] += gamma[k] * inv_std[k] * grad[b, oy, ox, k]
    return dx_arr, dgamma_arr, dbeta_arr


def im2col(const double[:, :, :, ::1] xp, int kh, int kw, int stride, Py_ssize_t ho, Py_ssize_t wo):
    """(N, Hp, Wp, C) -> (N * Ho * Wo, kh * kw * C), channels fastest."""
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[3]
    cols_arr = np.empty((n * ho * wo, kh * kw * c), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t b, oy, ox, i, j, k, row, col
    with nogil:
        row = 0
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    col = 0
                    for i in range(kh):
                        for j in range(kw):
                            for k in range(c):
                                cols[row, col] = xp[b, oy * stride + i, ox * stride + j, k]
                                col += 1
                    row += 1
    return cols_arr


def col2im(const double[:, ::1] dcols, Py_ssize_t n, Py_ssize_t hp, Py_ssize_t wp, Py_ssize_t c,
           int kh, int kw, int stride, Py_ssize_t ho, Py_ssize_t wo):
    """Scatter-add the inverse of ``im2col`` into an (N, Hp, Wp, C) array."""
    dxp_arr = np.zeros((n, hp, wp, c), dtype=np.float64)
    cdef double[:, :, :, ::1] dxp = dxp_arr
    cdef Py_ssize_t b, oy, ox, i, j, k, row, col
    with nogil:
        row = 0
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    col = 0
                    for i in range(kh):
                        for j in range(kw):
                            for k in range(c):
                                dxp[b, oy * stride + i, ox * stride + j, k] += dcols[row, col]
                                col += 1
                    row += 1
    return dxp_arr
