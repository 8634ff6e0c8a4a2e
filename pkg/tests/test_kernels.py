"""The compiled and numpy kernels must agree; most comparisons are bit-exact."""
import numpy as np
import pytest

from brainmri import kernels

both = pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")


def test_backend_selection():
    assert kernels.BACKEND in kernels.available_backends()
    assert kernels.get_backend("python") is kernels._pykernels
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_window_distances_brute_force(backend):
    rng = np.random.default_rng(0)
    img = rng.random((20, 22))
    bs = 4
    d = kernels.window_distances(img, 5, 6, bs, 2, 9, 3, 12, backend=backend)
    ref = img[5:9, 6:10]
    for i, y in enumerate(range(2, 9)):
        for j, x in enumerate(range(3, 12)):
            assert d[i, j] == pytest.approx(np.mean((img[y : y + bs, x : x + bs] - ref) ** 2), rel=1e-12)
    assert d[5 - 2, 6 - 3] == 0.0


def test_label_components_raster_order(backend):
    m = np.array(
        [
            [1, 0, 0, 1],
            [0, 1, 0, 1],
            [0, 0, 0, 0],
            [1, 1, 0, 1],
        ],
        dtype=bool,
    )
    labels, sizes = kernels.label_components(m, 8, backend=backend)
    assert list(sizes) == [0, 2, 2, 2, 1]
    assert labels[0, 0] == 1 and labels[1, 1] == 1 and labels[0, 3] == 2 and labels[3, 0] == 3 and labels[3, 3] == 4
    labels4, sizes4 = kernels.label_components(m, 4, backend=backend)
    assert list(sizes4) == [0, 1, 2, 1, 2, 1]
    with pytest.raises(ValueError):
        kernels.label_components(m, 5)


def test_channel_stats(backend):
    x = np.random.default_rng(1).standard_normal((3, 5, 4, 6))
    mean, var = kernels.channel_stats(x, backend=backend)
    flat = x.reshape(-1, 6)
    np.testing.assert_allclose(mean, flat.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(var, flat.var(axis=0), rtol=1e-12)


def test_im2col_col2im_adjoint(backend):
    rng = np.random.default_rng(2)
    n, hp, wp, c, k, s = 2, 7, 8, 3, 3, 2
    ho, wo = (hp - k) // s + 1, (wp - k) // s + 1
    x = rng.standard_normal((n, hp, wp, c))
    cols = kernels.im2col(x, k, k, s, ho, wo, backend=backend)
    assert cols.shape == (n * ho * wo, k * k * c)
    # row (n, oy, ox) holds the patch in (kh, kw, C) order
    np.testing.assert_array_equal(cols[wo + 1], x[0, s : s + k, s : s + k, :].ravel())
    g = rng.standard_normal(cols.shape)
    back = kernels.col2im(g, (n, hp, wp, c), k, k, s, ho, wo, backend=backend)
    assert np.sum(cols * g) == pytest.approx(np.sum(x * back), rel=1e-12)


@both
def test_backends_agree_bitwise():
    rng = np.random.default_rng(3)
    img = rng.random((30, 30))
    a = kernels.window_distances(img, 10, 11, 8, 0, 22, 0, 22, backend="python")
    b = kernels.window_distances(img, 10, 11, 8, 0, 22, 0, 22, backend="cython")
    np.testing.assert_array_equal(a, b)

    m = rng.random((40, 37)) > 0.55
    for conn in (4, 8):
        la, sa = kernels.label_components(m, conn, backend="python")
        lb, sb = kernels.label_components(m, conn, backend="cython")
        np.testing.assert_array_equal(la, lb)
        np.testing.assert_array_equal(sa, sb)

    x = rng.standard_normal((2, 9, 9, 4))
    ca = kernels.im2col(x, 3, 3, 1, 7, 7, backend="python")
    cb = kernels.im2col(x, 3, 3, 1, 7, 7, backend="cython")
    np.testing.assert_array_equal(ca, cb)
    g = rng.standard_normal(ca.shape)
    np.testing.assert_allclose(
        kernels.col2im(g, x.shape, 3, 3, 1, 7, 7, backend="python"),
        kernels.col2im(g, x.shape, 3, 3, 1, 7, 7, backend="cython"),
        rtol=1e-13,
        atol=1e-13,
    )


@both
@pytest.mark.parametrize("batch_stats", [True, False])
def test_fused_block_backends_agree(batch_stats):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 6, 7, 5))
    mean, var = kernels.channel_stats(x)
    inv = 1 / np.sqrt(var + 1e-8)
    gamma, beta = rng.uniform(0.5, 1.5, 5), rng.uniform(-0.3, 0.3, 5)
    oa, arga = kernels.bn_relu_pool_forward(x, mean, inv, gamma, beta, 2, backend="python")
    ob, argb = kernels.bn_relu_pool_forward(x, mean, inv, gamma, beta, 2, backend="cython")
    np.testing.assert_allclose(oa, ob, rtol=1e-14, atol=1e-15)
    np.testing.assert_array_equal(arga, argb)
    g = rng.standard_normal(oa.shape)
    ra = kernels.bn_relu_pool_backward(g, arga, x, mean, inv, gamma, 2, batch_stats, backend="python")
    rb = kernels.bn_relu_pool_backward(g, argb, x, mean, inv, gamma, 2, batch_stats, backend="cython")
    for a, b in zip(ra, rb):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


def test_fused_forward_matches_unfused(backend):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 6, 8, 4))
    mean, var = kernels.channel_stats(x)
    inv = 1 / np.sqrt(var + 1e-8)
    gamma, beta = rng.uniform(0.5, 1.5, 4), rng.uniform(-0.3, 0.3, 4)
    out, arg = kernels.bn_relu_pool_forward(x, mean, inv, gamma, beta, 2, backend=backend)
    y = np.maximum((x - mean) * inv * gamma + beta, 0)
    ref = y.reshape(3, 3, 2, 4, 2, 4).max(axis=(2, 4))
    np.testing.assert_allclose(out, ref, rtol=1e-14, atol=1e-15)
    assert arg.dtype == np.int8


def test_window_bounds_checked():
    img = np.zeros((10, 10))
    with pytest.raises(ValueError):
        kernels.window_distances(img, 0, 0, 4, 0, 7, 0, 6)
    with pytest.raises(ValueError):
        kernels.window_distances(img, 7, 0, 4, 0, 6, 0, 6)
