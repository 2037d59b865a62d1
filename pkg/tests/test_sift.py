from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from speckle_auth import _kernels
from speckle_auth.errors import DimensionError, ParameterError
from speckle_auth.imaging import rotate, rotate_point
from speckle_auth.sift import (SiftParams, _peak_orientations, build_scale_space, detect_and_describe,
                               detect_extrema, n_octaves, refine_keypoints)


def naive_extrema(ss, p):
    """Exhaustive strict 26-neighbor scan, one sample at a time (oracle)."""
    thr = 0.5 * p.contrast_threshold / p.n_octave_layers
    out = set()
    for o, dog in enumerate(ss.dog):
        n, h, w = dog.shape
        for l in range(1, n - 1):
            for y in range(1, h - 1):
                for x in range(1, w - 1):
                    v = dog[l, y, x]
                    if abs(v) < thr:
                        continue
                    cube = dog[l - 1:l + 2, y - 1:y + 2, x - 1:x + 2].ravel()
                    others = np.delete(cube, 13)
                    if v > others.max() or v < others.min():
                        out.add((o, l, x, y))
    return out


def blob(size=64, sigma=4.0, center=32.0):
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    return 0.1 + 0.8 * np.exp(-((xx - center) ** 2 + (yy - center) ** 2) / (2 * sigma ** 2))


# ---------------------------------------------------------------- params / scale space

def test_params_validation():
    for kw in ({"n_octave_layers": 0}, {"contrast_threshold": 0.0}, {"edge_threshold": 0.5}, {"sigma": 0.0},
               {"n_features": -1}, {"octave_downsample": 1.0}):
        with pytest.raises(ParameterError):
            SiftParams(**kw)


def test_scale_space_shape_270x360():
    ss = build_scale_space(np.random.default_rng(0).random((270, 360)))
    assert len(ss.octaves) == 5 == len(ss.dog)
    assert all(g.shape[0] == 7 and d.shape[0] == 6 for g, d in zip(ss.octaves, ss.dog))
    assert ss.octaves[1].shape[1:] == (135, 180)
    assert ss.absolute_scale(1, 0) == pytest.approx(3.2)
    assert ss.absolute_scale(0, 4) == pytest.approx(3.2)


def test_octave_count_rule():
    assert n_octaves((270, 360)) == math.floor(math.log2(270 / 8))
    assert n_octaves((270, 360), 1.6) == math.floor(math.log(270 / 8) / math.log(1.6))


def test_downsample_1_6_pipeline(speckle_image):
    p = SiftParams(octave_downsample=1.6)
    ss = build_scale_space(speckle_image, p)
    assert len(ss.octaves) == n_octaves((270, 360), 1.6)
    assert ss.octaves[1].shape[1:] == (168, 225)
    fs = detect_and_describe(speckle_image, p)
    assert len(fs) > 100


def test_constant_image_has_no_features():
    img = np.full((64, 80), 0.4)
    ss = build_scale_space(img)
    assert all(np.all(d == 0) for d in ss.dog)
    assert len(detect_extrema(ss)) == 0
    assert len(detect_and_describe(img)) == 0


def test_too_small_image():
    with pytest.raises(DimensionError):
        build_scale_space(np.zeros((15, 40)))


# ---------------------------------------------------------------- extrema

@pytest.mark.parametrize("size", [64, 128])
def test_extrema_equal_naive_scan(size):
    img = np.random.default_rng(size).random((size, size))
    p = SiftParams()
    ss = build_scale_space(img, p)
    fast = {tuple(int(v) for v in row) for row in detect_extrema(ss, p)}
    assert len(fast) > 0
    assert fast == naive_extrema(ss, p)


def test_blob_dominant_extremum_and_scale():
    p = SiftParams()
    ss = build_scale_space(blob(), p)
    raw = detect_extrema(ss, p)
    vals = np.array([abs(ss.dog[o][l, y, x]) for o, l, x, y in raw])
    o, l, x, y = raw[np.argmax(vals)]
    step = ss.pixel_size(o)
    assert abs(x * step - 32) <= 1 and abs(y * step - 32) <= 1
    assert np.sort(vals)[-1] > 5 * np.sort(vals)[-2]
    # oracle: peak |DoG| at the blob center over a dense grid of layer scales.  A unit-peak blob of
    # width sb blurred by t has center value sb^2 / (sb^2 + t^2); the applied blur of a layer at scale
    # s is sqrt(s^2 - 0.5^2) because the input already carries the assumed camera blur.
    sb, k = 4.0, p.k
    s = np.linspace(1.0, 12.0, 20001)

    def center(t):
        return sb ** 2 / (sb ** 2 + t ** 2)

    resp = np.abs(center(np.sqrt((k * s) ** 2 - 0.25)) - center(np.sqrt(s ** 2 - 0.25)))
    best = s[np.argmax(resp)]
    detected = p.sigma * k ** l * step
    assert abs(math.log(detected / best) / math.log(k)) <= 1.0


def test_blob_refined_center():
    kps = refine_keypoints(*(lambda ss: (detect_extrema(ss), ss))(build_scale_space(blob())))
    d = np.hypot(kps.x - 32, kps.y - 32)
    assert len(kps) >= 1 and d.min() < 0.3


def test_edge_extrema_rejected():
    yy, xx = np.mgrid[0:64, 0:64].astype(float)
    edge = 0.5 + 0.4 * erf((xx - 32 - 0.05 * (yy - 32)) / 2.0)
    ss = build_scale_space(edge)
    raw = detect_extrema(ss)
    assert len(raw) > 0
    assert len(refine_keypoints(raw, ss)) == 0


def _quadratic_dog(ratio):
    # D = c - a x^2 - b y^2 - e l^2 around (layer 2, row 8, col 8); dyadic values keep differences exact
    b = 2.0 ** -10
    a = ratio * b
    e = 2.0 ** -8
    ll, yy, xx = np.mgrid[0:5, 0:17, 0:17].astype(float)
    return 0.25 - a * (xx - 8) ** 2 - b * (yy - 8) ** 2 - e * (ll - 2) ** 2


@pytest.mark.parametrize("ratio,kept", [(5.0, False), (4.5, True)])
def test_edge_ratio_boundary(ratio, kept):
    dog = _quadratic_dog(ratio)
    one = np.array([2], dtype=np.int64)
    res = _kernels.refine_extrema(dog, one, np.array([8]), np.array([8]), 3, 0.04, 5.0)
    assert bool(res[0][0]) is kept


def test_contrast_rejection():
    dog = _quadratic_dog(1.0) - 0.25 + 0.005  # peak 0.005 < 0.04 / 4
    res = _kernels.refine_extrema(dog, np.array([2]), np.array([8]), np.array([8]), 4, 0.04, 5.0)
    assert not res[0][0]


# ---------------------------------------------------------------- orientation / descriptor

def test_ramp_orientation_zero():
    ramp = np.tile(np.linspace(0.1, 0.9, 64), (64, 1))
    ss = build_scale_space(ramp)
    h = _kernels.orientation_histograms(ss.octaves[0], np.array([1]), np.array([32]), np.array([32]),
                                        np.array([1.6 * SiftParams().k]))
    peaks = _peak_orientations(h[0])
    assert len(peaks) == 1
    assert min(peaks[0], 360 - peaks[0]) <= 5.0


def test_peak_orientation_parabolic():
    hist = np.zeros(36)
    hist[9], hist[10], hist[11] = 1.0, 3.0, 2.0
    (angle,) = _peak_orientations(hist)
    offset = 0.5 * (1.0 - 2.0) / (1.0 - 6.0 + 2.0)
    assert angle == pytest.approx((10 + offset) * 10.0)


def test_symmetric_blob_orientations_within_ratio():
    ss = build_scale_space(blob())
    h = _kernels.orientation_histograms(ss.octaves[1], np.array([1]), np.array([16]), np.array([16]),
                                        np.array([1.6 * SiftParams().k]))[0]
    peaks = _peak_orientations(h)
    idx = [int(round(a / 10.0)) % 36 for a in peaks]
    assert all(h[i] >= 0.8 * h.max() - 1e-12 for i in idx)


def test_rotation_90_equivariance(speckle_image):
    a = detect_and_describe(speckle_image)
    b = detect_and_describe(rotate(speckle_image, 90.0))
    ka, kb = a.keypoints, b.keypoints
    found = 0
    agree, exact0 = [], []
    for i in range(len(ka)):
        x, y = rotate_point(ka.x[i], ka.y[i], speckle_image.shape, 90.0)
        cand = (np.hypot(kb.x - x, kb.y - y) <= 1.5) & (kb.octave == ka.octave[i]) & (kb.layer == ka.layer[i])
        if not cand.any():
            continue
        found += 1
        diff = (kb.orientation - ka.orientation[i] - 90.0 + 180.0) % 360.0 - 180.0
        j = np.nonzero(cand)[0][np.argmin(np.abs(diff[cand]))]
        ok = abs(diff[j]) <= 5.0 and np.linalg.norm(a.descriptors[i] - b.descriptors[j]) < 0.3
        agree.append(ok)
        if ka.octave[i] == 0:
            exact0.append(ok)
    assert found >= 0.7 * len(ka)
    # the first octave is sampled on the same lattice after a quarter turn, so it is exact
    assert all(exact0) and len(exact0) > 100
    assert np.mean(agree) >= 0.9


def test_descriptor_norm_and_range(speckle_image):
    fs = detect_and_describe(speckle_image)
    norms = np.linalg.norm(fs.descriptors.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-5)
    assert fs.descriptors.min() >= 0.0
    assert fs.descriptors.shape[1] == 128 and fs.descriptors.dtype == np.float32


def test_keypoint_invariants(speckle_image):
    p = SiftParams()
    fs = detect_and_describe(speckle_image, p)
    k = fs.keypoints
    h, w = speckle_image.shape
    assert np.all((k.x >= 0) & (k.x < w) & (k.y >= 0) & (k.y < h))
    assert np.all(k.scale > 0)
    assert np.all((k.orientation >= 0) & (k.orientation < 360))
    assert np.all(k.response >= p.contrast_threshold / p.n_octave_layers)


# ---------------------------------------------------------------- full pipeline

def test_feature_count_on_speckle(speckle_image):
    assert 200 <= len(detect_and_describe(speckle_image)) <= 3000


def test_determinism(speckle_image):
    a = detect_and_describe(speckle_image)
    b = detect_and_describe(speckle_image.copy())
    np.testing.assert_array_equal(a.descriptors, b.descriptors)
    for name in ("x", "y", "scale", "orientation", "response"):
        np.testing.assert_array_equal(getattr(a.keypoints, name), getattr(b.keypoints, name))


def test_truncation_to_n_features(speckle_image):
    full = detect_and_describe(speckle_image)
    fs = detect_and_describe(speckle_image, SiftParams(n_features=50))
    assert len(fs) == 50
    assert np.all(np.diff(fs.keypoints.response) <= 0)
    np.testing.assert_array_equal(fs.descriptors, full.descriptors[:50])


@settings(max_examples=6, deadline=None)
@given(st.floats(0.01, 0.08), st.floats(0.0, 0.05))
def test_contrast_threshold_monotone(speckle_image, low, delta):
    img = speckle_image[:128, :160]
    n_low = len(detect_and_describe(img, SiftParams(contrast_threshold=low)))
    n_high = len(detect_and_describe(img, SiftParams(contrast_threshold=low + delta)))
    assert n_high <= n_low


def test_upsample_option_coordinates(speckle_image):
    img = speckle_image[:96, :128]
    fs = detect_and_describe(img, SiftParams(upsample=True))
    assert len(fs) > 0
    assert fs.keypoints.x.max() < 128 and fs.keypoints.y.max() < 96
