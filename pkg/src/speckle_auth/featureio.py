"""FeatureSet serialization.

Binary layout (little-endian)::

    header   magic b"SFT1", count u32,
             n_features u32, n_octave_layers u32, contrast_threshold f32,
             edge_threshold f32, sigma f32, octave_downsample f32,
             assumed_blur f32, upsample u8
    records  count x {x f32, y f32, scale f32, orientation f32,
                      response f32, descriptor 128 x f32}

Octave-local bookkeeping is not stored; loaded keypoints carry octave -1.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ParameterError
from .sift import DESCRIPTOR_SIZE, FeatureSet, Keypoints, SiftParams

MAGIC = b"SFT1"
_HEADER = struct.Struct("<4sIIIfffffB")
_RECORD = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("scale", "<f4"), ("orientation", "<f4"), ("response", "<f4"),
    ("descriptor", "<f4", (DESCRIPTOR_SIZE,)),
])


def to_bytes(fs: FeatureSet) -> bytes:
    p = fs.params
    head = _HEADER.pack(MAGIC, len(fs), p.n_features, p.n_octave_layers, p.contrast_threshold, p.edge_threshold,
                        p.sigma, p.octave_downsample, p.assumed_blur, int(p.upsample))
    rec = np.zeros(len(fs), dtype=_RECORD)
    k = fs.keypoints
    for name in ("x", "y", "scale", "orientation", "response"):
        rec[name] = getattr(k, name)
    rec["descriptor"] = fs.descriptors
    return head + rec.tobytes()


def from_bytes(data: bytes) -> FeatureSet:
    if len(data) < _HEADER.size:
        raise ParameterError("truncated feature file")
    magic, count, n_feat, n_layers, contrast, edge, sigma, down, blur, up = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParameterError(f"bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != count * _RECORD.itemsize:
        raise ParameterError(f"expected {count} records, found {len(body) / _RECORD.itemsize:g}")
    rec = np.frombuffer(body, dtype=_RECORD, count=count)
    n = len(rec)
    neg = np.full(n, -1, dtype=np.int64)
    kps = Keypoints(
        x=rec["x"].astype(np.float64), y=rec["y"].astype(np.float64), octave=neg, layer=neg.copy(),
        row=neg.copy(), col=neg.copy(), octave_scale=np.full(n, np.nan), scale=rec["scale"].astype(np.float64),
        orientation=rec["orientation"].astype(np.float64), response=rec["response"].astype(np.float64),
    )
    # float32 round trip of the header values
    params = SiftParams(n_features=n_feat, n_octave_layers=n_layers, contrast_threshold=_f(contrast),
                        edge_threshold=_f(edge), sigma=_f(sigma), octave_downsample=_f(down),
                        upsample=bool(up), assumed_blur=_f(blur))
    return FeatureSet(kps, np.array(rec["descriptor"], dtype=np.float32), params)


def _f(v: float) -> float:
    return float(np.format_float_positional(np.float32(v)))


def write_features(path: Union[str, Path], fs: FeatureSet) -> None:
    Path(path).write_bytes(to_bytes(fs))


def read_features(path: Union[str, Path]) -> FeatureSet:
    return from_bytes(Path(path).read_bytes())


def to_json(fs: FeatureSet) -> str:
    """Human-readable debug form."""
    k = fs.keypoints
    feats = [
        {"x": float(k.x[i]), "y": float(k.y[i]), "scale": float(k.scale[i]),
         "orientation": float(k.orientation[i]), "response": float(k.response[i]),
         "descriptor": [float(v) for v in fs.descriptors[i]]}
        for i in range(len(fs))
    ]
    return json.dumps({"format": "SFT1", "params": fs.params.to_dict(), "count": len(fs), "features": feats})
