"""Synthetic optical PUF: challenge masks, phase screens and far-field speckle.

A challenge is a binary DMD pattern that modulates the illuminated pupil.  The
PUF is a random phase screen; the camera sees the intensity of the pupil
field's discrete Fourier transform, tone-mapped and cropped to the sensor.
All randomness comes from explicit seeds.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import gaussian_filter

from .errors import DimensionError, ParameterError
from .imaging import GrayImage

SIM_SIZE = 512
SENSOR_SHAPE = (270, 360)

_ARCHETYPE_CODES = {"ps": 1, "pdlc": 2, "tio2": 3}


@dataclass(frozen=True)
class ArchetypePreset:
    """Knobs standing in for scatterer density and optical thickness.

    ``grain_px`` is the mean speckle size on the sensor; the pupil aperture
    diameter follows from it.  ``phase_corr_px`` is the correlation length of
    the phase screen.
    """

    grain_px: float
    phase_corr_px: float
    contrast_gain: float
    background: float


ARCHETYPES: dict[str, ArchetypePreset] = {
    "ps": ArchetypePreset(grain_px=9.0, phase_corr_px=0.5, contrast_gain=0.9, background=0.05),
    "pdlc": ArchetypePreset(grain_px=5.5, phase_corr_px=0.3, contrast_gain=1.0, background=0.0),
    "tio2": ArchetypePreset(grain_px=5.5, phase_corr_px=0.0, contrast_gain=0.36, background=0.4),
}


def _check_archetype(name: str) -> str:
    key = name.lower()
    if key not in ARCHETYPES:
        raise ParameterError(f"unknown archetype {name!r}; expected one of {sorted(ARCHETYPES)}")
    return key


@dataclass(frozen=True)
class ChallengeSpec:
    id: int
    seed: int
    dims: tuple[int, int] = (16, 16)
    fill: float = 0.5

    def __post_init__(self):
        if self.dims[0] < 8 or self.dims[1] < 8:
            raise DimensionError(f"challenge grid {self.dims} smaller than 8x8")
        if not 0.0 <= self.fill <= 1.0:
            raise ParameterError(f"fill must be in [0, 1], got {self.fill}")


@dataclass(frozen=True)
class AcquisitionParams:
    """Re-acquisition perturbations; all zeros gives a noiseless, repeatable camera.

    ``noise_sigma`` is additive Gaussian readout noise, ``jitter_px`` bounds a
    uniform random sub-pixel translation of the pattern, and ``gain_drift``
    bounds a multiplicative illumination change ``1 + U(-g, g)``.
    """

    noise_sigma: float = 0.0
    jitter_px: float = 0.0
    gain_drift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.noise_sigma, self.jitter_px, self.gain_drift) < 0:
            raise ParameterError("acquisition parameters must be non-negative")

    @property
    def is_zero(self) -> bool:
        return self.noise_sigma == 0 and self.jitter_px == 0 and self.gain_drift == 0

    def with_seed(self, seed: int) -> "AcquisitionParams":
        return AcquisitionParams(self.noise_sigma, self.jitter_px, self.gain_drift, seed)

    def to_dict(self) -> dict:
        return asdict(self)


# Environmental drift between two acquisition sessions of the same PUF.
DEFAULT_ACQUISITION = AcquisitionParams(noise_sigma=0.10, jitter_px=1.1, gain_drift=0.05)


@dataclass(frozen=True, eq=False)
class PufModel:
    archetype: str
    seed: int
    phase_screen: NDArray[np.complex128] = field(repr=False)
    grain_scale: float
    contrast_gain: float
    background: float

    def __eq__(self, other):
        if not isinstance(other, PufModel):
            return NotImplemented
        return (self.archetype, self.seed, self.grain_scale, self.contrast_gain, self.background) == (
            other.archetype, other.seed, other.grain_scale, other.contrast_gain, other.background
        ) and np.array_equal(self.phase_screen, other.phase_screen)

    __hash__ = None


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]))


def make_challenge(spec: ChallengeSpec) -> NDArray[np.uint8]:
    """Binary DMD mask with exactly ``round(fill * N)`` on-pixels."""
    rows, cols = spec.dims
    n = rows * cols
    on = int(round(spec.fill * n))
    mask = np.zeros(n, dtype=np.uint8)
    mask[_rng(spec.seed, 0xC4A1).permutation(n)[:on]] = 1
    return mask.reshape(rows, cols)


def make_puf(archetype: str, seed: int) -> PufModel:
    """Seeded unit-amplitude phase screen for one archetype."""
    key = _check_archetype(archetype)
    preset = ARCHETYPES[key]
    noise = _rng(_ARCHETYPE_CODES[key], seed).standard_normal((SIM_SIZE, SIM_SIZE))
    if preset.phase_corr_px > 0:
        noise = gaussian_filter(noise, preset.phase_corr_px, mode="wrap")
    # rank transform: uniform phase on [0, 2 pi) with the noise's spatial correlation
    ranks = np.empty(noise.size, dtype=np.float64)
    ranks[np.argsort(noise, axis=None, kind="stable")] = np.arange(noise.size)
    phase = 2.0 * np.pi * (ranks.reshape(noise.shape) + 0.5) / noise.size
    return PufModel(key, seed, np.exp(1j * phase), preset.grain_px, preset.contrast_gain, preset.background)


@lru_cache(maxsize=16)
def _aperture(grain_px: float) -> NDArray[np.float64]:
    diameter = SIM_SIZE / grain_px
    c = (SIM_SIZE - 1) / 2.0
    yy, xx = np.mgrid[0:SIM_SIZE, 0:SIM_SIZE]
    r = np.hypot(yy - c, xx - c)
    ap = (r <= diameter / 2.0).astype(np.float64)
    ap.setflags(write=False)
    return ap


def _pupil_mask(mask: NDArray[np.uint8], grain_px: float | None) -> NDArray[np.float64]:
    """Upsample the DMD pattern over the illuminated pupil as a +/-1 field."""
    rows, cols = mask.shape
    extent = SIM_SIZE if grain_px is None else int(math.ceil(SIM_SIZE / grain_px))
    extent = min(extent, SIM_SIZE)
    r_idx = (np.arange(extent) * rows) // extent
    c_idx = (np.arange(extent) * cols) // extent
    bipolar = 2.0 * mask.astype(np.float64) - 1.0
    up = bipolar[np.ix_(r_idx, c_idx)]
    out = np.zeros((SIM_SIZE, SIM_SIZE))
    off = (SIM_SIZE - extent) // 2
    out[off:off + extent, off:off + extent] = up
    return out


def far_field(puf: PufModel, c: ChallengeSpec, *, envelope: bool = True,
              shift: tuple[float, float] = (0.0, 0.0)) -> NDArray[np.float64]:
    """Raw far-field intensity on the full simulation grid.

    With ``envelope=False`` the whole grid is illuminated (no grain-scale
    aperture), which gives fully developed speckle with 1 px grains.
    ``shift`` translates the pattern by ``(dy, dx)`` pixels via a pupil tilt.
    """
    mask = make_challenge(c)
    pupil = _pupil_mask(mask, puf.grain_scale if envelope else None) * puf.phase_screen
    if envelope:
        pupil = pupil * _aperture(puf.grain_scale)
    if shift != (0.0, 0.0):
        f = np.arange(SIM_SIZE) / SIM_SIZE
        ramp = np.exp(2j * np.pi * (shift[0] * f[:, None] + shift[1] * f[None, :]))
        pupil = pupil * ramp
    field_ = np.fft.fft2(pupil)
    return field_.real ** 2 + field_.imag ** 2


def render_response(puf: PufModel, c: ChallengeSpec, acq: AcquisitionParams = AcquisitionParams()) -> GrayImage:
    """Camera image (270x360, values in [0, 1]) of the PUF under challenge ``c``."""
    rng = None if acq.is_zero else _rng(acq.seed, puf.seed, c.seed, c.id, 0xACC)
    shift = (0.0, 0.0)
    if rng is not None and acq.jitter_px > 0:
        shift = tuple(rng.uniform(-acq.jitter_px, acq.jitter_px, size=2))
    intensity = far_field(puf, c, shift=shift)
    intensity = np.fft.fftshift(intensity)
    h, w = SENSOR_SHAPE
    top, left = (SIM_SIZE - h) // 2, (SIM_SIZE - w) // 2
    crop = intensity[top:top + h, left:left + w]
    m = crop.mean()
    tone = crop / (crop + m) if m > 0 else np.zeros_like(crop)
    img = puf.background + puf.contrast_gain * (1.0 - puf.background) * tone
    if rng is not None:
        if acq.gain_drift > 0:
            img = img * (1.0 + rng.uniform(-acq.gain_drift, acq.gain_drift))
        if acq.noise_sigma > 0:
            img = img + rng.normal(0.0, acq.noise_sigma, size=img.shape)
    # 8-bit camera
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def challenge_for(index: int, seed: int, dims: tuple[int, int] = (16, 16), fill: float = 0.5) -> ChallengeSpec:
    """The ``index``-th challenge of a dataset seeded with ``seed``."""
    sub = int(_rng(seed, index, 0x5EED).integers(0, 2 ** 63 - 1))
    return ChallengeSpec(index, sub, dims, fill)


def speckle_cv(intensity: NDArray[np.float64]) -> float:
    """Coefficient of variation std/mean; 1 for fully developed speckle."""
    return float(intensity.std() / intensity.mean())
