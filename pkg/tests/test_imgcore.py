import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from brainmri.errors import (
    ArgumentError,
    MalformedHeaderError,
    RangeError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)
from brainmri.imgcore import (
    as_image,
    convolve2d,
    histogram256,
    load_image,
    load_pgm,
    psnr,
    resize_bilinear,
    save_pgm,
    to_grayscale,
)

unit_images = arrays(
    np.float64,
    st.tuples(st.integers(1, 12), st.integers(1, 12)),
    elements=st.floats(0, 1, allow_nan=False),
)


def _write(tmp_path, data: bytes, name="x.pgm"):
    p = tmp_path / name
    p.write_bytes(data)
    return p


def test_load_pgm_scales_by_maxval(tmp_path):
    p = _write(tmp_path, b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    img = load_pgm(p)
    np.testing.assert_allclose(img, [[0, 128 / 255], [1.0, 64 / 255]])
    assert img[0, 1] == pytest.approx(0.50196, abs=1e-5)
    assert img[1, 1] == pytest.approx(0.25098, abs=1e-5)


def test_load_pgm_header_comments(tmp_path):
    p = _write(tmp_path, b"P5\n# made by hand\n3 1\n# another\n255\n" + bytes([1, 2, 3]))
    np.testing.assert_array_equal(load_pgm(p), [[1 / 255, 2 / 255, 3 / 255]])


def test_load_pgm_16bit_big_endian(tmp_path):
    p = _write(tmp_path, b"P5\n2 1\n65535\n" + bytes([0x01, 0x00, 0xFF, 0xFF]))
    np.testing.assert_array_equal(load_pgm(p), [[256 / 65535, 1.0]])


def test_truncated_payload(tmp_path):
    p = _write(tmp_path, b"P5\n2 2\n255\n" + bytes([1, 2, 3]))
    with pytest.raises(TruncatedPayloadError):
        load_pgm(p)


@pytest.mark.parametrize(
    "data, exc",
    [
        (b"P6\n1 1\n255\n\x00\x00\x00", UnsupportedFormatError),
        (b"P2\n1 1\n255\n0\n", UnsupportedFormatError),
        (b"P5\n2 x\n255\n\x00\x00", MalformedHeaderError),
        (b"P5\n0 2\n255\n", MalformedHeaderError),
        (b"P5\n1 1\n70000\n\x00\x00", MalformedHeaderError),
        (b"P5\n1 1", MalformedHeaderError),
    ],
)
def test_load_errors_are_distinct(tmp_path, data, exc):
    with pytest.raises(exc):
        load_pgm(_write(tmp_path, data))


def test_save_constant_half_is_128(tmp_path):
    p = tmp_path / "h.pgm"
    save_pgm(np.full((3, 4), 0.5), p)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    assert raw[len(b"P5\n4 3\n255\n") :] == bytes([128] * 12)


def test_save_out_of_range(tmp_path):
    with pytest.raises(RangeError):
        save_pgm(np.array([[1.2]]), tmp_path / "bad.pgm")


def test_save_bad_depth(tmp_path):
    with pytest.raises(ArgumentError):
        save_pgm(np.zeros((2, 2)), tmp_path / "d.pgm", depth=12)


@settings(max_examples=40, deadline=None)
@given(img=unit_images, depth=st.sampled_from([8, 16]))
def test_pgm_round_trip(tmp_path_factory, img, depth):
    maxval = 255 if depth == 8 else 65535
    q = np.rint(img * maxval) / maxval
    p = tmp_path_factory.mktemp("rt") / "a.pgm"
    save_pgm(q, p, depth=depth)
    np.testing.assert_array_equal(load_pgm(p), q)


def test_load_image_dispatches_to_pillow(tmp_path):
    PIL = pytest.importorskip("PIL.Image")
    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    path = tmp_path / "red.png"
    PIL.fromarray(rgb).save(path)
    np.testing.assert_allclose(load_image(path), np.full((2, 3), 0.299))


def test_to_grayscale_rec601():
    px = np.array([[[1.0, 1.0, 1.0], [0.0, 1.0, 0.0]]])
    np.testing.assert_allclose(to_grayscale(px), [[1.0, 0.587]])


def test_as_image_rejects_nan_and_wrong_rank():
    with pytest.raises(ArgumentError):
        as_image([[np.nan]])
    with pytest.raises(ArgumentError):
        as_image(np.zeros(3))
    with pytest.raises(ArgumentError):
        as_image(np.zeros((0, 3)))


def test_resize_identity_and_hand_values():
    img = np.arange(12.0).reshape(3, 4) / 11
    np.testing.assert_array_equal(resize_bilinear(img, 4, 3), img)
    np.testing.assert_allclose(resize_bilinear(np.array([[0.0, 1.0]]), 3, 1), [[0.0, 0.5, 1.0]])
    assert resize_bilinear(img, 150, 150).size == 22500


def test_resize_corners_preserved():
    img = np.random.default_rng(0).random((7, 9))
    out = resize_bilinear(img, 20, 13)
    assert out.shape == (13, 20)
    for (y, x), (oy, ox) in zip([(0, 0), (0, 8), (6, 0), (6, 8)], [(0, 0), (0, 19), (12, 0), (12, 19)]):
        assert out[oy, ox] == pytest.approx(img[y, x], abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(img=unit_images, w=st.integers(1, 20), h=st.integers(1, 20))
def test_resize_within_input_range(img, w, h):
    out = resize_bilinear(img, w, h)
    assert out.shape == (h, w)
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12


def test_resize_bad_size():
    with pytest.raises(ArgumentError):
        resize_bilinear(np.zeros((2, 2)), 0, 3)


def test_convolve_delta_and_box():
    img = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(convolve2d(img, [[1.0]]), img)
    out = convolve2d(img, np.full((3, 3), 1 / 9))
    assert out[1, 1] == pytest.approx(img.mean(), abs=1e-14)


def test_convolve_flips_kernel():
    img = np.zeros((3, 3))
    img[1, 1] = 1.0
    k = np.arange(9.0).reshape(3, 3)
    # convolution of a delta reproduces the kernel itself
    np.testing.assert_array_equal(convolve2d(img, k, border="zero"), k)


def test_convolve_even_kernel_rejected():
    with pytest.raises(ArgumentError):
        convolve2d(np.zeros((4, 4)), np.ones((2, 3)))
    with pytest.raises(ArgumentError):
        convolve2d(np.zeros((4, 4)), np.ones((3, 3)), border="wrap")


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0, 1), kh=st.sampled_from([1, 3, 5, 7]), kw=st.sampled_from([1, 3, 5]), seed=st.integers(0, 99))
def test_convolve_preserves_constant(c, kh, kw, seed):
    k = np.random.default_rng(seed).random((kh, kw))
    k /= k.sum()
    out = convolve2d(np.full((5, 6), c), k)
    np.testing.assert_allclose(out, c, rtol=0, atol=1e-15)


def test_histogram():
    h = histogram256(np.zeros((4, 5)))
    assert h[0] == 20 and h[1:].sum() == 0
    h = histogram256(np.array([[0.0, 1.0]]))
    assert h[0] == 1 and h[255] == 1 and h.sum() == 2
    assert histogram256(np.random.default_rng(1).random((10, 10))).sum() == 100
    with pytest.raises(RangeError):
        histogram256(np.array([[1.5]]))


def test_psnr_values():
    a = np.random.default_rng(2).random((4, 4)) * 0.8
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    ref = np.zeros((2, 2))
    test = np.array([[0.1, 0.0], [0.2, 0.0]])
    assert psnr(ref, test) == pytest.approx(19.0309, abs=1e-4)
    assert psnr(test, ref) == psnr(ref, test)
    with pytest.raises(ArgumentError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))
