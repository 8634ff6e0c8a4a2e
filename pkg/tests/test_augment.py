import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainmri.augment import (
    AugmentConfig,
    augment_sample,
    balance_classes,
    draw_params,
    flip_h,
    flip_v,
    plan_sources,
    rotate,
    shift,
)
from brainmri.errors import ArgumentError
from brainmri.imgcore import psnr


def smooth_phantom(n=64):
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    blob = np.exp(-((x - 0.5) ** 2 + (y - 0.45) ** 2) / 0.04)
    return 0.1 + 0.6 * blob + 0.1 * np.sin(3 * x) * np.cos(2 * y)


def test_flips():
    img = np.array([[0.1, 0.2]])
    np.testing.assert_array_equal(flip_h(img), [[0.2, 0.1]])
    img = np.random.default_rng(0).random((5, 7))
    np.testing.assert_array_equal(flip_h(flip_h(img)), img)
    np.testing.assert_array_equal(flip_v(img), img[::-1])


def test_rotate_identity_and_quarter_turn():
    img = np.random.default_rng(1).random((9, 9))
    np.testing.assert_array_equal(rotate(img, 0), img)
    # counter-clockwise as displayed: top row moves to the left column
    np.testing.assert_allclose(rotate(img, 90), np.rot90(img), atol=1e-12)
    np.testing.assert_allclose(rotate(img, 90), img.T[::-1], atol=1e-12)
    np.testing.assert_allclose(rotate(img, 180), img[::-1, ::-1], atol=1e-12)


def test_rotate_round_trip_psnr():
    img = smooth_phantom()
    back = rotate(rotate(img, 10), -10)
    # compare inside the disk that never leaves the frame
    n = img.shape[0]
    y, x = np.mgrid[0:n, 0:n]
    inner = np.hypot(y - (n - 1) / 2, x - (n - 1) / 2) < 0.45 * n
    assert psnr(np.where(inner, img, 0.0), np.where(inner, back, 0.0)) >= 30.0
    assert psnr(img, rotate(rotate(img, 10, "reflect"), -10, "reflect")) >= 30.0


def test_shift_integer_and_inverse():
    img = np.random.default_rng(2).random((10, 10))
    np.testing.assert_array_equal(shift(img, 0, 0), img)
    out = shift(img, 2 / 10, 0)
    np.testing.assert_allclose(out[:, 2:], img[:, :-2], atol=1e-12)
    np.testing.assert_array_equal(out[:, :2], 0.0)
    down = shift(img, 0, -3 / 10)
    np.testing.assert_allclose(down[:-3], img[3:], atol=1e-12)
    smooth = smooth_phantom(40)
    back = shift(shift(smooth, 3 / 40, -5 / 40), -3 / 40, 5 / 40)
    np.testing.assert_allclose(back[6:-6, 6:-6], smooth[6:-6, 6:-6], atol=1e-9)
    # bilinear sampling reproduces planes, so sub-pixel round trips are exact there
    y, x = np.mgrid[0:40, 0:40]
    plane = 0.2 + 0.01 * x + 0.005 * y
    back = shift(shift(plane, 0.073, -0.041), -0.073, 0.041)
    np.testing.assert_allclose(back[6:-6, 6:-6], plane[6:-6, 6:-6], atol=1e-9)
    with pytest.raises(ArgumentError):
        shift(img, 0.6, 0)


def test_reflect_fill_has_no_zeros():
    img = np.full((12, 12), 0.5)
    np.testing.assert_allclose(shift(img, 0.25, 0.25, "reflect"), 0.5, atol=1e-15)
    np.testing.assert_allclose(rotate(img, 33, "reflect"), 0.5, atol=1e-15)


def test_config_validation():
    with pytest.raises(ArgumentError):
        AugmentConfig(rotation_range=200)
    with pytest.raises(ArgumentError):
        AugmentConfig(width_shift=0.7)
    with pytest.raises(ArgumentError):
        AugmentConfig(fill="wrap")


def test_null_config_is_identity():
    cfg = AugmentConfig(rotation_range=0, width_shift=0, height_shift=0, hflip=False, vflip=False)
    img = np.random.default_rng(3).random((8, 8))
    for k in range(10):
        np.testing.assert_array_equal(augment_sample(img, cfg, k), img)


def test_draws_deterministic_and_spread():
    cfg = AugmentConfig(seed=11)
    img = smooth_phantom(24)
    np.testing.assert_array_equal(augment_sample(img, cfg, 7), augment_sample(img, cfg, 7))
    angles = np.array([draw_params(cfg, k)["angle"] for k in range(100)])
    assert np.all(np.abs(angles) <= 15)
    assert angles.std() > 5
    assert draw_params(cfg, 3) != draw_params(AugmentConfig(seed=12), 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**40), k=st.integers(0, 10_000))
def test_draws_within_ranges(seed, k):
    cfg = AugmentConfig(rotation_range=20, width_shift=0.2, height_shift=0.05, vflip=False, seed=seed)
    p = draw_params(cfg, k)
    assert abs(p["angle"]) <= 20 and abs(p["dx"]) <= 0.2 and abs(p["dy"]) <= 0.05
    assert p["vflip"] is False


def test_balance_classes():
    counts = {"no_tumor": 500, "pituitary": 901, "meningioma": 937, "glioma": 926}
    assert balance_classes(counts, 937) == {"no_tumor": 437, "pituitary": 36, "meningioma": 0, "glioma": 11}
    assert balance_classes({"a": 5, "b": 5}, 5) == {"a": 0, "b": 0}
    assert balance_classes({"a": 999, "b": 1000}, 1000) == {"a": 1, "b": 0}
    with pytest.raises(ArgumentError):
        balance_classes(counts, 900)


def test_plan_sources_round_robin():
    plan = plan_sources(3, 7)
    assert plan == [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2)]
    assert plan_sources(0, 0) == []
    with pytest.raises(ArgumentError):
        plan_sources(0, 2)
