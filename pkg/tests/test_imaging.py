from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speckle_auth.errors import DimensionError, ParameterError
from speckle_auth.imaging import (CropCenter, CropCorner, CropFrame, CropSide, Rotate, Scale, apply_transform,
                                  gaussian_blur, gaussian_kernel, normalize, read_image, resample, rotate,
                                  rotate_point, transform_name, write_image)


def naive_blur(img, sigma):
    """Direct 2-D convolution with an edge-replicated border (oracle)."""
    r = int(math.ceil(4 * sigma))
    ax = np.arange(-r, r + 1)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    pad = np.pad(img, r, mode="edge")
    out = np.zeros_like(img)
    for i in range(img.shape[0]):
        for j in range(img.shape[1]):
            out[i, j] = np.sum(pad[i:i + 2 * r + 1, j:j + 2 * r + 1] * g)
    return out


# ---------------------------------------------------------------- blur

def test_blur_constant_image_unchanged():
    img = np.full((20, 30), 0.37)
    np.testing.assert_allclose(gaussian_blur(img, 2.3), img, atol=1e-12)


def test_kernel_sums_to_one_and_radius():
    for s in (0.5, 1.6, 3.2):
        k = gaussian_kernel(s)
        assert abs(k.sum() - 1.0) < 1e-6
        assert len(k) == 2 * math.ceil(4 * s) + 1


def test_impulse_response_center_is_kernel_peak():
    img = np.zeros((33, 33))
    img[16, 16] = 1.0
    out = gaussian_blur(img, 1.6)
    r = math.ceil(4 * 1.6)
    ax = np.arange(-r, r + 1)
    g2 = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * 1.6 ** 2))
    g2 /= g2.sum()
    assert out[16, 16] == pytest.approx(g2.max(), rel=1e-12)
    assert out.max() == out[16, 16]


def test_blur_matches_naive_2d_convolution(rng):
    img = rng.random((24, 19))
    np.testing.assert_allclose(gaussian_blur(img, 1.3), naive_blur(img, 1.3), atol=1e-12)


def test_blur_semigroup_away_from_border(rng):
    img = rng.random((64, 64))
    a = gaussian_blur(gaussian_blur(img, 1.6), 2.5)
    b = gaussian_blur(img, math.hypot(1.6, 2.5))
    inner = (slice(16, -16), slice(16, -16))
    assert np.sqrt(np.mean((a - b)[inner] ** 2)) < 1e-3


def test_blur_preserves_mean(rng):
    # smooth content: edge replication then only perturbs the mean through small border gradients
    img = normalize(gaussian_blur(rng.random((128, 128)), 3.0))
    assert abs(gaussian_blur(img, 1.6).mean() - img.mean()) < 1e-4


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_blur_rejects_bad_sigma(sigma):
    with pytest.raises(ParameterError):
        gaussian_blur(np.zeros((8, 8)), sigma)


# ---------------------------------------------------------------- resample

def test_resample_identity(rng):
    img = rng.random((17, 23))
    np.testing.assert_array_equal(resample(img, 1.0), img)


def test_resample_checkerboard_upsample():
    # 2x2 input is below the 8x8 output floor, so tile it: corners of each cell are exact samples
    board = np.tile(np.array([[0.0, 1.0], [1.0, 0.0]]), (4, 4))
    out = resample(board, 2.0)
    assert out.shape == (16, 16)
    np.testing.assert_array_equal(out[::2, ::2], board)
    # midpoints: bilinear weights 1/2 (edges) and 1/4 (cell centers)
    assert out[0, 1] == 0.5 and out[1, 0] == 0.5 and out[1, 1] == 0.5


def test_resample_dimensions():
    img = np.zeros((270, 360))
    assert resample(img, 0.5).shape == (135, 180)
    assert resample(img, 1.5).shape == (405, 540)
    assert resample(img, 0.8).shape == (216, 288)
    with pytest.raises(DimensionError):
        resample(np.zeros((20, 20)), 0.3)
    with pytest.raises(ParameterError):
        resample(img, 0.0)


def test_resample_round_trip_band_limited(rng):
    img = gaussian_blur(rng.random((64, 64)), 2.0)
    back = resample(resample(img, 2.0), 0.5)
    assert np.sqrt(np.mean((back - img) ** 2)) < 0.02


# ---------------------------------------------------------------- normalize

def test_normalize_cases():
    np.testing.assert_array_equal(normalize(np.full((3, 3), 5.0)), 0.0)
    v = np.array([[0.0, 0.5, 1.0]])
    np.testing.assert_array_equal(normalize(v), v)
    np.testing.assert_array_equal(normalize(np.array([[2.0, 4.0]])), [[0.0, 1.0]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_normalize_range_property(values):
    out = normalize(np.array([values]))
    assert np.all(np.isfinite(out)) and out.min() >= 0.0 and out.max() <= 1.0


# ---------------------------------------------------------------- transforms

def test_rotate_zero_identity(rng):
    img = rng.random((27, 36))
    np.testing.assert_array_equal(apply_transform(img, Rotate(0.0)), img)


def test_rotate_90_permutation(rng):
    img = rng.random((27, 36))
    out = apply_transform(img, Rotate(90.0))
    h, w = img.shape
    assert out.shape == (w, h)
    for y, x in [(0, 0), (5, 7), (26, 35), (13, 0)]:
        # pixel (x, y) lands at (y, W-1-x)
        assert out[w - 1 - x, y] == img[y, x]
        assert rotate_point(x, y, img.shape, 90.0) == (y, w - 1 - x)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 3), st.integers(9, 30), st.integers(9, 30))
def test_quarter_turns_compose(k, h, w):
    img = np.random.default_rng(h * 31 + w).random((h, w))
    out = img
    for _ in range(4):
        out = rotate(out, 90.0 * k)
    np.testing.assert_array_equal(out, img)


def test_rotate_zero_fill_and_canvas(rng):
    img = np.ones((40, 60))
    out = rotate(img, 45.0)
    side = 50 * math.sqrt(2)
    assert out.shape == (int(round(side)), int(round(side)))
    assert out[0, 0] == 0.0 and out.max() == pytest.approx(1.0)


@pytest.mark.parametrize("angle", [15.0, 30.0, 45.0])
def test_rotate_round_trip_center(rng, angle):
    img = normalize(gaussian_blur(rng.random((96, 128)), 3.0))
    back = rotate(rotate(img, angle), 360.0 - angle)
    h, w = img.shape
    top, left = int(round((back.shape[0] - h) / 2)), int(round((back.shape[1] - w) / 2))
    back = back[top:top + h, left:left + w]
    win = (slice(h // 4, h - h // 4), slice(w // 4, w - w // 4))
    assert np.sqrt(np.mean((back[win] - img[win]) ** 2)) < 0.05


def test_rotate_point_matches_rotated_peak():
    img = np.zeros((41, 61))
    img[10, 45] = 1.0
    img = gaussian_blur(img, 1.5)
    out = rotate(img, 30.0)
    x, y = rotate_point(45, 10, img.shape, 30.0)
    r, c = np.unravel_index(np.argmax(out), out.shape)
    assert abs(c - x) <= 1 and abs(r - y) <= 1


def test_crop_dimensions():
    img = np.arange(270 * 360, dtype=float).reshape(270, 360)
    assert apply_transform(img, CropFrame(0.10)).shape == (243, 324)
    tl = apply_transform(img, CropCorner(0.10, "TL"))
    assert tl.shape == (243, 324) and tl[0, 0] == img[27, 36]
    br = apply_transform(img, CropCorner(0.10, "BR"))
    assert br[0, 0] == img[0, 0] and br.shape == (243, 324)
    right = apply_transform(img, CropSide(0.10, "right"))
    assert right.shape == (270, 324) and right[0, 0] == img[0, 0]
    top = apply_transform(img, CropSide(0.10, "top"))
    assert top.shape == (243, 360)
    win = apply_transform(img, CropCenter(0.20, "window"))
    assert win.shape == (216, 288)


def test_crop_center_blank_area():
    img = np.ones((270, 360))
    out = apply_transform(img, CropCenter(0.20))
    assert out.shape == img.shape
    assert abs((out == 0).mean() - 0.20) < 0.01
    assert out[135, 180] == 0.0 and out[0, 0] == 1.0


def test_scale_delegates_to_resample(rng):
    img = rng.random((30, 40))
    np.testing.assert_array_equal(apply_transform(img, Scale(1.5)), resample(img, 1.5))


@pytest.mark.parametrize("make", [lambda: Rotate(360.0), lambda: Rotate(-1.0), lambda: Scale(0.0),
                                  lambda: CropFrame(0.0), lambda: CropFrame(1.0), lambda: CropCorner(0.1, "XX"),
                                  lambda: CropSide(0.1, "middle"), lambda: CropCenter(0.2, "ring")])
def test_invalid_transforms(make):
    with pytest.raises(ParameterError):
        make()


def test_transform_names():
    assert transform_name(Scale(1.5)) == "scale_1.5"
    assert transform_name(CropCorner(0.1, "TL")) == "crop_corner_TL_0.1"
    assert transform_name(Rotate(15.0)) == "rotate_15"


# ---------------------------------------------------------------- I/O

@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_image_round_trip(tmp_path, rng, suffix):
    img = rng.random((13, 17))
    path = tmp_path / f"img{suffix}"
    write_image(path, img)
    back = read_image(path)
    np.testing.assert_allclose(back, np.round(img * 255) / 255, atol=1e-12)
    if suffix == ".pgm":
        assert path.read_bytes()[:2] == b"P5"
