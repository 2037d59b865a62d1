"""Scale-invariant feature detector and descriptor.

The pipeline is the classic four-stage one: difference-of-Gaussian extrema,
quadratic localization with contrast/edge rejection, orientation assignment
from a gradient histogram, and a 4x4x8 gradient descriptor.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .errors import DimensionError, ParameterError
from .imaging import GrayImage, as_image, gaussian_blur, resample

DESCRIPTOR_SIZE = _kernels.DESC_LEN
MIN_IMAGE_DIM = 16
ORIENTATION_PEAK_RATIO = 0.8


@dataclass(frozen=True)
class SiftParams:
    n_features: int = 0
    n_octave_layers: int = 4
    contrast_threshold: float = 0.04
    edge_threshold: float = 5.0
    sigma: float = 1.6
    octave_downsample: float = 2.0
    upsample: bool = False
    assumed_blur: float = 0.5

    def __post_init__(self):
        if self.n_features < 0:
            raise ParameterError("n_features must be >= 0")
        if self.n_octave_layers < 1:
            raise ParameterError("n_octave_layers must be >= 1")
        if not self.contrast_threshold > 0:
            raise ParameterError("contrast_threshold must be positive")
        if not self.edge_threshold >= 1:
            raise ParameterError("edge_threshold must be >= 1")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if not self.octave_downsample > 1:
            raise ParameterError("octave_downsample must be > 1")

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.n_octave_layers)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    octave: int
    scale: float
    orientation: float
    response: float


@dataclass
class Keypoints:
    """Column store of keypoints.

    ``x``/``y``/``scale`` are in input-image pixels.  The octave-local fields
    (``layer`` is the Gaussian layer index used for gradients, ``row``/``col``
    the rounded octave-pixel position, ``octave_scale`` the sigma in octave
    pixels) feed the orientation and descriptor stages.
    """

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    octave: NDArray[np.int64]
    layer: NDArray[np.int64]
    row: NDArray[np.int64]
    col: NDArray[np.int64]
    octave_scale: NDArray[np.float64]
    scale: NDArray[np.float64]
    orientation: NDArray[np.float64]
    response: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i: int) -> Keypoint:
        return Keypoint(float(self.x[i]), float(self.y[i]), int(self.octave[i]), float(self.scale[i]),
                        float(self.orientation[i]), float(self.response[i]))

    def __iter__(self) -> Iterator[Keypoint]:
        return (self[i] for i in range(len(self)))

    def take(self, idx) -> "Keypoints":
        return Keypoints(**{name: getattr(self, name)[idx] for name in self.__dataclass_fields__})

    @classmethod
    def empty(cls) -> "Keypoints":
        f = np.zeros(0)
        i = np.zeros(0, dtype=np.int64)
        return cls(f, f, i, i, i, i, f, f, f, f)

    @classmethod
    def concat(cls, parts: list["Keypoints"]) -> "Keypoints":
        if not parts:
            return cls.empty()
        return cls(**{name: np.concatenate([getattr(p, name) for p in parts]) for name in cls.__dataclass_fields__})


@dataclass
class FeatureSet:
    """Keypoints with their unit-norm 128-d descriptors (``float32``)."""

    keypoints: Keypoints
    descriptors: NDArray[np.float32]
    params: SiftParams = field(default_factory=SiftParams)

    def __len__(self) -> int:
        return len(self.keypoints)

    @classmethod
    def empty(cls, params: SiftParams | None = None) -> "FeatureSet":
        return cls(Keypoints.empty(), np.zeros((0, DESCRIPTOR_SIZE), dtype=np.float32), params or SiftParams())


@dataclass
class ScaleSpace:
    """Gaussian and DoG stacks, one ``(layers, rows, cols)`` array per octave."""

    octaves: list[NDArray[np.float64]]
    dog: list[NDArray[np.float64]]
    params: SiftParams
    input_shape: tuple[int, int]
    base_factor: float = 1.0

    def pixel_size(self, octave: int) -> float:
        """Size of one octave pixel in input-image pixels."""
        return self.params.octave_downsample ** octave / self.base_factor

    def absolute_scale(self, octave: int, layer: float) -> float:
        return self.params.sigma * self.params.k ** layer * self.pixel_size(octave)


def n_octaves(shape: tuple[int, int], downsample: float = 2.0) -> int:
    return int(math.floor(math.log(min(shape) / 8.0) / math.log(downsample)))


def build_scale_space(img: GrayImage, p: SiftParams = SiftParams()) -> ScaleSpace:
    """Gaussian pyramid with ``n_octave_layers + 3`` images per octave and their differences."""
    img = as_image(img)
    if min(img.shape) < MIN_IMAGE_DIM:
        raise DimensionError(f"image {img.shape} smaller than {MIN_IMAGE_DIM}x{MIN_IMAGE_DIM}")
    input_shape = img.shape
    s = p.n_octave_layers
    k = p.k
    blur = p.assumed_blur
    base_factor = 1.0
    if p.upsample:
        img = resample(img, 2.0)
        blur *= 2.0
        base_factor = 2.0
    count = n_octaves(img.shape, p.octave_downsample)
    if count < 1:
        raise DimensionError(f"image {img.shape} too small for one octave")

    increments = [math.sqrt((p.sigma * k ** i) ** 2 - (p.sigma * k ** (i - 1)) ** 2) for i in range(1, s + 3)]
    # seed layer for the next octave: the largest relative scale not above the downsample factor
    seed_layer = max(i for i in range(s + 3) if k ** i <= p.octave_downsample * (1 + 1e-9))
    first = math.sqrt(max(p.sigma ** 2 - blur ** 2, 0.01))
    current = gaussian_blur(img, first)

    octaves, dogs = [], []
    for o in range(count):
        stack = [current]
        for inc in increments:
            stack.append(gaussian_blur(stack[-1], inc))
        gauss = np.stack(stack)
        octaves.append(gauss)
        dogs.append(gauss[1:] - gauss[:-1])
        if o + 1 < count:
            seed = resample(gauss[seed_layer], 1.0 / p.octave_downsample)
            seed_sigma = p.sigma * k ** seed_layer / p.octave_downsample
            if seed_sigma < p.sigma * (1 - 1e-9):
                seed = gaussian_blur(seed, math.sqrt(p.sigma ** 2 - seed_sigma ** 2))
            current = seed
    return ScaleSpace(octaves, dogs, p, input_shape, base_factor)


def detect_extrema(ss: ScaleSpace, p: SiftParams | None = None) -> NDArray[np.int64]:
    """Strict 26-neighbor extrema of every DoG stack.

    Returns an ``(n, 4)`` int array of ``(octave, layer, x, y)`` with ``layer``
    indexing the DoG stack (outermost layers and a 1 px border excluded),
    sorted lexicographically.
    """
    p = p or ss.params
    threshold = 0.5 * p.contrast_threshold / p.n_octave_layers
    found = []
    for o, dog in enumerate(ss.dog):
        n_dog, h, w = dog.shape
        center = dog[1:-1, 1:-1, 1:-1]
        is_max = np.abs(center) >= threshold
        is_min = is_max.copy()
        for dl in (-1, 0, 1):
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dl == dr == dc == 0:
                        continue
                    nb = dog[1 + dl:n_dog - 1 + dl, 1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]
                    is_max &= center > nb
                    is_min &= center < nb
        layer, row, col = np.nonzero(is_max | is_min)
        found.append(np.column_stack([np.full(len(layer), o), layer + 1, col + 1, row + 1]))
    if not found:
        return np.zeros((0, 4), dtype=np.int64)
    out = np.concatenate(found).astype(np.int64)
    order = np.lexsort((out[:, 2], out[:, 3], out[:, 1], out[:, 0]))
    return out[order]


def refine_keypoints(raw: NDArray[np.int64], ss: ScaleSpace, p: SiftParams | None = None) -> Keypoints:
    """Sub-pixel localization and stability filtering of raw extrema."""
    p = p or ss.params
    parts = []
    for o, dog in enumerate(ss.dog):
        cand = raw[raw[:, 0] == o]
        if len(cand) == 0:
            continue
        keep, lay, row, col, off_l, off_r, off_c, value = _kernels.refine_extrema(
            dog, cand[:, 1].copy(), cand[:, 3].copy(), cand[:, 2].copy(),
            p.n_octave_layers, p.contrast_threshold, p.edge_threshold)
        if not keep.any():
            continue
        lay, row, col = lay[keep], row[keep], col[keep]
        off_l, off_r, off_c, value = off_l[keep], off_r[keep], off_c[keep], value[keep]
        step = ss.pixel_size(o)
        layer_pos = lay + off_l
        oct_scale = p.sigma * p.k ** layer_pos
        h, w = dog.shape[1:]
        parts.append(Keypoints(
            x=(col + off_c) * step,
            y=(row + off_r) * step,
            octave=np.full(len(lay), o, dtype=np.int64),
            layer=np.clip(np.round(layer_pos).astype(np.int64), 0, p.n_octave_layers + 2),
            row=np.clip(np.round(row + off_r).astype(np.int64), 1, h - 2),
            col=np.clip(np.round(col + off_c).astype(np.int64), 1, w - 2),
            octave_scale=oct_scale,
            scale=oct_scale * step,
            orientation=np.zeros(len(lay)),
            response=np.abs(value),
        ))
    return Keypoints.concat(parts)


def _peak_orientations(hist: NDArray[np.float64]) -> list[float]:
    n = len(hist)
    peak = hist.max()
    if peak <= 0:
        return []
    out = []
    for i in range(n):
        left, right, c = hist[i - 1], hist[(i + 1) % n], hist[i]
        if c > left and c > right and c >= ORIENTATION_PEAK_RATIO * peak:
            denom = left - 2.0 * c + right
            offset = 0.5 * (left - right) / denom if denom != 0 else 0.0
            out.append(((i + offset) * 360.0 / n) % 360.0)
    return out


def assign_orientations(kps: Keypoints, ss: ScaleSpace, p: SiftParams | None = None) -> Keypoints:
    """Emit one keypoint per dominant gradient direction (peaks >= 0.8 of the maximum)."""
    parts = []
    for o, gauss in enumerate(ss.octaves):
        sel = np.nonzero(kps.octave == o)[0]
        if len(sel) == 0:
            continue
        sub = kps.take(sel)
        hists = _kernels.orientation_histograms(gauss, sub.layer, sub.row, sub.col, sub.octave_scale)
        idx, angles = [], []
        for i, hist in enumerate(hists):
            for a in _peak_orientations(hist):
                idx.append(i)
                angles.append(a)
        if not idx:
            continue
        oriented = sub.take(np.asarray(idx, dtype=np.intp))
        oriented.orientation = np.asarray(angles, dtype=np.float64)
        parts.append(oriented)
    return Keypoints.concat(parts)


def compute_descriptors(kps: Keypoints, ss: ScaleSpace, p: SiftParams | None = None) -> FeatureSet:
    """Describe oriented keypoints; those whose window leaves the octave image are dropped."""
    p = p or ss.params
    parts, descs = [], []
    for o, gauss in enumerate(ss.octaves):
        sel = np.nonzero(kps.octave == o)[0]
        if len(sel) == 0:
            continue
        sub = kps.take(sel)
        vecs, valid = _kernels.descriptors(gauss, sub.layer, sub.row, sub.col, sub.octave_scale, sub.orientation)
        parts.append(sub.take(valid))
        descs.append(vecs[valid].astype(np.float32))
    if not parts:
        return FeatureSet.empty(p)
    return FeatureSet(Keypoints.concat(parts), np.concatenate(descs), p)


def sort_features(fs: FeatureSet) -> FeatureSet:
    """Descending response; ties by (octave, layer, y, x, orientation)."""
    k = fs.keypoints
    order = np.lexsort((k.orientation, k.x, k.y, k.layer, k.octave, -k.response))
    return FeatureSet(k.take(order), fs.descriptors[order], fs.params)


def detect_and_describe(img: GrayImage, p: SiftParams = SiftParams()) -> FeatureSet:
    """Run the full pipeline on one image.

    Output is sorted by descending response and truncated to ``p.n_features``
    when that is positive.
    """
    ss = build_scale_space(img, p)
    raw = detect_extrema(ss, p)
    if len(raw) == 0:
        return FeatureSet.empty(p)
    kps = refine_keypoints(raw, ss, p)
    kps = assign_orientations(kps, ss, p)
    fs = sort_features(compute_descriptors(kps, ss, p))
    if p.n_features > 0 and len(fs) > p.n_features:
        keep = np.arange(p.n_features)
        fs = FeatureSet(fs.keypoints.take(keep), fs.descriptors[keep], p)
    return fs
