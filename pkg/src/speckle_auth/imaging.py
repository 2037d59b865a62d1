"""Grayscale image kernels: blur, resampling, geometric transforms and I/O.

Images are plain 2-D ``float64`` numpy arrays indexed ``[row, col]`` with
intensities in [0, 1].  Every function here is pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import NDArray
from PIL import Image
from scipy.ndimage import convolve1d

from .errors import DimensionError, ParameterError

GrayImage = NDArray[np.float64]

MIN_RESAMPLE_DIM = 8


def as_image(data) -> GrayImage:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {img.shape}")
    return img


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------

def gaussian_kernel(sigma: float) -> NDArray[np.float64]:
    """Sampled 1-D Gaussian truncated at ``ceil(4 sigma)``, normalized to sum 1."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with edge replication at the borders."""
    kernel = gaussian_kernel(sigma)
    img = as_image(img)
    # blur the deviation from one pixel value so flat regions stay exactly flat
    ref = img.flat[0]
    out = convolve1d(img - ref, kernel, axis=0, mode="nearest")
    return convolve1d(out, kernel, axis=1, mode="nearest") + ref


def normalize(img: GrayImage) -> GrayImage:
    """Affinely rescale so the minimum maps to 0 and the maximum to 1.

    A constant image maps to all zeros.
    """
    img = as_image(img)
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _interp_axis(img: GrayImage, coords: NDArray[np.float64], axis: int) -> GrayImage:
    # Linear interpolation along one axis; coordinates are clamped to the edge.
    n = img.shape[axis]
    c = np.clip(coords, 0.0, n - 1)
    i0 = np.floor(c).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    w = c - i0
    a = np.take(img, i0, axis=axis)
    b = np.take(img, i1, axis=axis)
    shape = [1, 1]
    shape[axis] = -1
    w = w.reshape(shape)
    return a * (1.0 - w) + b * w


def resampled_shape(shape: tuple[int, int], factor: float) -> tuple[int, int]:
    if factor >= 1.0:
        return tuple(int(round(s * factor)) for s in shape)
    return tuple(int(math.floor(s * factor)) for s in shape)


def resample(img: GrayImage, factor: float) -> GrayImage:
    """Bilinear resize by ``factor``.

    Output pixel ``i`` samples input coordinate ``i / factor``, so a factor of
    0.5 is an exact decimation and upsampling keeps the original samples at
    even output indices.  Output dims are ``round(dims * factor)`` when
    enlarging and ``floor(dims * factor)`` when shrinking.
    """
    if not factor > 0:
        raise ParameterError(f"resample factor must be positive, got {factor}")
    img = as_image(img)
    if factor == 1.0:
        return img.copy()
    h, w = resampled_shape(img.shape, factor)
    if h < MIN_RESAMPLE_DIM or w < MIN_RESAMPLE_DIM:
        raise DimensionError(f"resampled image {h}x{w} is smaller than {MIN_RESAMPLE_DIM}x{MIN_RESAMPLE_DIM}")
    rows = np.arange(h, dtype=np.float64) / factor
    cols = np.arange(w, dtype=np.float64) / factor
    return _interp_axis(_interp_axis(img, rows, 0), cols, 1)


def sample_bilinear(img: GrayImage, xs: NDArray, ys: NDArray, fill: float = 0.0) -> NDArray[np.float64]:
    """Sample ``img`` at real coordinates ``(xs, ys)``; points outside the grid get ``fill``."""
    h, w = img.shape
    eps = 1e-9
    valid = (xs >= -eps) & (xs <= w - 1 + eps) & (ys >= -eps) & (ys <= h - 1 + eps)
    x = np.clip(xs, 0.0, w - 1)
    y = np.clip(ys, 0.0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.where(valid, out, fill)


# ---------------------------------------------------------------------------
# geometric transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rotate:
    """Counter-clockwise rotation (as displayed) about the image center."""

    angle: float

    def __post_init__(self):
        if not 0.0 <= self.angle < 360.0:
            raise ParameterError(f"rotation angle must be in [0, 360), got {self.angle}")


@dataclass(frozen=True)
class Scale:
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ParameterError(f"scale factor must be positive, got {self.factor}")


def _check_fraction(fraction: float) -> None:
    if not 0.0 < fraction < 1.0:
        raise ParameterError(f"crop fraction must be in (0, 1), got {fraction}")


@dataclass(frozen=True)
class CropFrame:
    """Remove ``fraction / 2`` of each dimension from every edge."""

    fraction: float

    def __post_init__(self):
        _check_fraction(self.fraction)


CORNERS = ("TL", "TR", "BL", "BR")
SIDES = ("top", "bottom", "left", "right")


@dataclass(frozen=True)
class CropCorner:
    """Remove ``fraction`` of the height and width on the two edges meeting at ``corner``."""

    fraction: float
    corner: str = "TL"

    def __post_init__(self):
        _check_fraction(self.fraction)
        if self.corner not in CORNERS:
            raise ParameterError(f"corner must be one of {CORNERS}, got {self.corner!r}")


@dataclass(frozen=True)
class CropSide:
    fraction: float
    side: str = "right"

    def __post_init__(self):
        _check_fraction(self.fraction)
        if self.side not in SIDES:
            raise ParameterError(f"side must be one of {SIDES}, got {self.side!r}")


@dataclass(frozen=True)
class CropCenter:
    """Occlude the image center.

    ``mode="blank"`` zero-fills a centered rectangle covering ``fraction`` of
    the image area.  ``mode="window"`` instead keeps only a centered window of
    ``1 - fraction`` linear extent.
    """

    fraction: float
    mode: str = "blank"

    def __post_init__(self):
        _check_fraction(self.fraction)
        if self.mode not in ("blank", "window"):
            raise ParameterError(f"CropCenter mode must be 'blank' or 'window', got {self.mode!r}")


Transform = Union[Rotate, Scale, CropFrame, CropCorner, CropSide, CropCenter]


def rotate(img: GrayImage, angle: float) -> GrayImage:
    """Rotate counter-clockwise by ``angle`` degrees onto an enlarged canvas.

    Quarter turns are exact permutations.  Other angles use bilinear
    interpolation, and canvas pixels with no source data are 0.
    """
    img = as_image(img)
    a = angle % 360.0
    if a % 90.0 == 0.0:
        return np.rot90(img, k=int(a // 90.0)).copy()
    h, w = img.shape
    t = math.radians(a)
    c, s = math.cos(t), math.sin(t)
    w2 = int(round(abs(w * c) + abs(h * s)))
    h2 = int(round(abs(w * s) + abs(h * c)))
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    cx2, cy2 = (w2 - 1) / 2.0, (h2 - 1) / 2.0
    yy, xx = np.mgrid[0:h2, 0:w2].astype(np.float64)
    dx = xx - cx2
    dy = yy - cy2
    # forward map (dx, dy) -> (dx c + dy s, -dx s + dy c); invert it
    src_x = dx * c - dy * s + cx
    src_y = dx * s + dy * c + cy
    return sample_bilinear(img, src_x, src_y, fill=0.0)


def rotate_point(x: float, y: float, shape: tuple[int, int], angle: float) -> tuple[float, float]:
    """Where pixel ``(x, y)`` of an image with ``shape`` lands after :func:`rotate`."""
    h, w = shape
    a = angle % 360.0
    t = math.radians(a)
    c, s = math.cos(t), math.sin(t)
    if a % 90.0 == 0.0:
        c, s = round(c), round(s)
    w2 = int(round(abs(w * c) + abs(h * s)))
    h2 = int(round(abs(w * s) + abs(h * c)))
    dx = x - (w - 1) / 2.0
    dy = y - (h - 1) / 2.0
    return dx * c + dy * s + (w2 - 1) / 2.0, -dx * s + dy * c + (h2 - 1) / 2.0


def _checked(img: GrayImage) -> GrayImage:
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError("crop produced an empty image")
    return img.copy()


def apply_transform(img: GrayImage, t: Transform) -> GrayImage:
    img = as_image(img)
    h, w = img.shape
    if isinstance(t, Rotate):
        return rotate(img, t.angle)
    if isinstance(t, Scale):
        return resample(img, t.factor)
    if isinstance(t, CropFrame):
        nh = int(round(h * (1.0 - t.fraction)))
        nw = int(round(w * (1.0 - t.fraction)))
        top, left = (h - nh) // 2, (w - nw) // 2
        return _checked(img[top:top + nh, left:left + nw])
    if isinstance(t, CropCorner):
        dh = int(round(h * t.fraction))
        dw = int(round(w * t.fraction))
        rows = slice(dh, h) if t.corner[0] == "T" else slice(0, h - dh)
        cols = slice(dw, w) if t.corner[1] == "L" else slice(0, w - dw)
        return _checked(img[rows, cols])
    if isinstance(t, CropSide):
        if t.side in ("top", "bottom"):
            d = int(round(h * t.fraction))
            return _checked(img[d:] if t.side == "top" else img[:h - d])
        d = int(round(w * t.fraction))
        return _checked(img[:, d:] if t.side == "left" else img[:, :w - d])
    if isinstance(t, CropCenter):
        if t.mode == "window":
            nh = int(round(h * (1.0 - t.fraction)))
            nw = int(round(w * (1.0 - t.fraction)))
            top, left = (h - nh) // 2, (w - nw) // 2
            return _checked(img[top:top + nh, left:left + nw])
        side = math.sqrt(t.fraction)
        bh, bw = int(round(h * side)), int(round(w * side))
        top, left = (h - bh) // 2, (w - bw) // 2
        out = img.copy()
        out[top:top + bh, left:left + bw] = 0.0
        return out
    raise ParameterError(f"unknown transform {t!r}")


def transform_name(t: Transform) -> str:
    if isinstance(t, Rotate):
        return f"rotate_{t.angle:g}"
    if isinstance(t, Scale):
        return f"scale_{t.factor:g}"
    if isinstance(t, CropFrame):
        return f"crop_frame_{t.fraction:g}"
    if isinstance(t, CropCorner):
        return f"crop_corner_{t.corner}_{t.fraction:g}"
    if isinstance(t, CropSide):
        return f"crop_side_{t.side}_{t.fraction:g}"
    if isinstance(t, CropCenter):
        return f"crop_center_{t.mode}_{t.fraction:g}"
    raise ParameterError(f"unknown transform {t!r}")


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def read_image(path: Union[str, Path]) -> GrayImage:
    """Load an 8-bit grayscale PNG or binary PGM as reals in [0, 1]."""
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        data = np.asarray(im, dtype=np.float64)
    return data / 255.0


def to_uint8(img: GrayImage) -> NDArray[np.uint8]:
    return np.clip(np.round(as_image(img) * 255.0), 0, 255).astype(np.uint8)


def write_image(path: Union[str, Path], img: GrayImage) -> None:
    """Write ``img`` as 8-bit PNG (or P5 PGM for ``.pgm``/``.pnm`` suffixes)."""
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else "PNG"
    Image.fromarray(to_uint8(img), mode="L").save(path, format=fmt)
