"""Gabor-hash binary keys and fractional Hamming distance statistics.

This is the conventional baseline: each image is filtered with complex Gabor
kernels, the real part of the response is sampled on a coarse grid and its
sign becomes one key bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from .errors import DimensionError, ParameterError
from .imaging import GrayImage, as_image

# Gaussian envelope width relative to the wavelength (about one octave of bandwidth).
SIGMA_PER_WAVELENGTH = 0.56


@dataclass(frozen=True)
class GaborParams:
    wavelength: float = 4.0
    orientations: tuple[float, ...] = (0.0, 45.0, 90.0, 135.0)
    grid: tuple[int, int] = (32, 32)

    def __post_init__(self):
        if not self.wavelength > 1.0:
            raise ParameterError(f"wavelength must exceed 1 px, got {self.wavelength}")
        if len(self.orientations) == 0:
            raise ParameterError("at least one orientation is required")
        if self.grid[0] < 1 or self.grid[1] < 1:
            raise ParameterError(f"invalid grid {self.grid}")

    @property
    def n_bits(self) -> int:
        return self.grid[0] * self.grid[1] * len(self.orientations)


@dataclass(frozen=True, eq=False)
class BinaryKey:
    bits: NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.bits)

    def __eq__(self, other):
        return isinstance(other, BinaryKey) and np.array_equal(self.bits, other.bits)

    __hash__ = None

    def __invert__(self) -> "BinaryKey":
        return BinaryKey(~self.bits)

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, n_bits: int) -> "BinaryKey":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        return cls(np.unpackbits(raw)[:n_bits].astype(bool))


def gabor_kernel(wavelength: float, angle_deg: float) -> NDArray[np.complex128]:
    """Zero-mean complex Gabor kernel (isotropic envelope)."""
    sigma = SIGMA_PER_WAVELENGTH * wavelength
    radius = int(math.ceil(3.0 * sigma))
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1].astype(np.float64)
    t = math.radians(angle_deg)
    # y axis points down in the image; rotate counter-clockwise as displayed
    xr = x * math.cos(t) - y * math.sin(t)
    env = np.exp(-(x ** 2 + y ** 2) / (2.0 * sigma ** 2))
    carrier = np.exp(2j * np.pi * xr / wavelength)
    k = env * carrier
    k -= env * (k.sum() / env.sum())
    return k


def grid_points(shape: tuple[int, int], grid: tuple[int, int]) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    h, w = shape
    rows = np.floor((np.arange(grid[0]) + 0.5) * h / grid[0]).astype(np.intp)
    cols = np.floor((np.arange(grid[1]) + 0.5) * w / grid[1]).astype(np.intp)
    return rows, cols


def gabor_responses(img: GrayImage, p: GaborParams) -> NDArray[np.complex128]:
    """Complex filter responses at the grid points, shape ``(orientations, rows, cols)``."""
    img = as_image(img)
    if img.shape[0] < p.grid[0] or img.shape[1] < p.grid[1]:
        raise DimensionError(f"image {img.shape} smaller than hash grid {p.grid}")
    kernels = [gabor_kernel(p.wavelength, a) for a in p.orientations]
    radius = kernels[0].shape[0] // 2
    padded = np.pad(img, radius, mode="reflect")
    rows, cols = grid_points(img.shape, p.grid)
    windows = sliding_window_view(padded, kernels[0].shape)[np.ix_(rows, cols)]
    # correlation with the flipped kernel is convolution with the kernel
    return np.stack([np.einsum("ijkl,kl->ij", windows, k[::-1, ::-1]) for k in kernels])


def gabor_hash(img: GrayImage, p: GaborParams = GaborParams()) -> BinaryKey:
    """One bit per grid point and orientation: the sign of the real response."""
    return BinaryKey((gabor_responses(img, p).real > 0).ravel())


def fhd(a: BinaryKey, b: BinaryKey) -> float:
    """Fractional Hamming distance."""
    if len(a) != len(b):
        raise ParameterError(f"key lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ParameterError("empty keys")
    return float(np.count_nonzero(a.bits != b.bits)) / len(a)


def fhd_matrix(keys_a: Sequence[BinaryKey], keys_b: Sequence[BinaryKey]) -> NDArray[np.float64]:
    """Pairwise FHD between two key lists."""
    a = np.stack([k.bits for k in keys_a]).astype(np.float64)
    b = np.stack([k.bits for k in keys_b]).astype(np.float64)
    if a.shape[1] != b.shape[1]:
        raise ParameterError("key lengths differ")
    agree = a @ b.T + (1.0 - a) @ (1.0 - b).T
    return 1.0 - agree / a.shape[1]


def _zero_lag(profile: NDArray[np.float64]) -> float:
    # Uncorrelated pixel noise only adds to lag 0, so extrapolate it from lags 1 and 2
    # assuming a locally Gaussian autocorrelation.
    a1, a2 = profile[1], profile[2]
    if a1 <= 0 or a2 <= 0 or a2 >= a1:
        return float(profile[0])
    b = (math.log(a1) - math.log(a2)) / 3.0
    return min(float(profile[0]), a1 * math.exp(b))


def grain_size(img: GrayImage) -> float:
    """Mean speckle grain size: FWHM of the intensity autocorrelation.

    The zero-lag peak is extrapolated from its neighbors so white readout
    noise does not shrink the estimate.
    """
    img = as_image(img)
    z = img - img.mean()
    spectrum = np.fft.fft2(z, s=(2 * img.shape[0], 2 * img.shape[1]))
    ac = np.fft.ifft2(np.abs(spectrum) ** 2).real
    if ac[0, 0] <= 0:
        raise ParameterError("constant image has no grain size")
    widths = []
    for profile in (ac[0, :img.shape[1]], ac[:img.shape[0], 0]):
        if len(profile) < 3:
            continue
        profile = profile / _zero_lag(profile)
        below = np.nonzero(profile < 0.5)[0]
        if len(below) == 0:
            continue
        i = below[0]
        # linear interpolation of the half-maximum crossing
        x = i - 1 + (profile[i - 1] - 0.5) / (profile[i - 1] - profile[i])
        widths.append(2.0 * x)
    if not widths:
        raise ParameterError("autocorrelation never falls below one half")
    return float(np.mean(widths))


def tuned_params(images: Sequence[GrayImage], sample: int = 16, **kwargs) -> GaborParams:
    """GaborParams whose wavelength is the mean grain size of (up to ``sample``) images."""
    if not images:
        raise ParameterError("no images to tune on")
    step = max(1, len(images) // sample)
    sizes = [grain_size(img) for img in list(images)[::step][:sample]]
    return GaborParams(wavelength=max(float(np.mean(sizes)), 1.0 + 1e-6), **kwargs)


@dataclass
class FhdStats:
    like: NDArray[np.float64]
    unlike: NDArray[np.float64]
    ideal_like: NDArray[np.float64]
    params: GaborParams = field(default_factory=GaborParams)

    def summary(self) -> dict:
        out = {}
        for name in ("like", "unlike", "ideal_like"):
            v = getattr(self, name)
            out[name] = {"n": int(v.size), "mean": float(v.mean()) if v.size else None,
                         "std": float(v.std()) if v.size else None}
        out["wavelength"] = self.params.wavelength
        out["n_bits"] = self.params.n_bits
        return out

    def histogram(self, bins: int = 50) -> tuple[NDArray, NDArray, NDArray, NDArray]:
        """Counts per bin over [0, 1]: ``(bin_center, like, unlike, ideal_like)``."""
        edges = np.linspace(0.0, 1.0, bins + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        return (centers, np.histogram(self.like, edges)[0], np.histogram(self.unlike, edges)[0],
                np.histogram(self.ideal_like, edges)[0])


def fhd_stats_from_keys(keys_t0: Sequence[BinaryKey], keys_t1: Sequence[BinaryKey],
                        p: GaborParams = GaborParams()) -> FhdStats:
    if len(keys_t0) != len(keys_t1):
        raise ParameterError(f"databases differ in size: {len(keys_t0)} vs {len(keys_t1)}")
    m = fhd_matrix(keys_t0, keys_t1)
    off = ~np.eye(len(keys_t0), dtype=bool)
    ideal = np.array([fhd(k, k) for k in keys_t0])
    return FhdStats(like=np.diag(m).copy(), unlike=m[off], ideal_like=ideal, params=p)


def fhd_stats(db_t0, db_t1, p: GaborParams | None = None) -> FhdStats:
    """Like/unlike/ideal-like FHD distributions between two aligned databases.

    ``p`` defaults to :func:`tuned_params` on the t0 responses.
    """
    ids0 = [r.id for r in db_t0.records]
    ids1 = [r.id for r in db_t1.records]
    if ids0 != ids1:
        raise ParameterError("databases are not aligned on challenge ids")
    seeds0 = [r.challenge_seed for r in db_t0.records]
    seeds1 = [r.challenge_seed for r in db_t1.records]
    if seeds0 != seeds1:
        raise ParameterError("databases were built from different challenges")
    imgs0 = [db_t0.response(i) for i in range(len(ids0))]
    imgs1 = [db_t1.response(i) for i in range(len(ids1))]
    p = p or tuned_params(imgs0)
    keys0 = [gabor_hash(im, p) for im in imgs0]
    keys1 = [gabor_hash(im, p) for im in imgs1]
    return fhd_stats_from_keys(keys0, keys1, p)
