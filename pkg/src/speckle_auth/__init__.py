"""SIFT-based authentication of optical speckle PUFs, with a Gabor-hash baseline."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import DimensionError, ParameterError, SpeckleAuthError
from .imaging import (CropCenter, CropCorner, CropFrame, CropSide, Rotate, Scale, apply_transform, read_image,
                      write_image)
from .sift import FeatureSet, Keypoints, SiftParams, detect_and_describe
from .matching import MatchParams, MatchResult, SearchReport, match_matrix, ratio_match, search_database
from .speckle import (ARCHETYPES, DEFAULT_ACQUISITION, AcquisitionParams, ChallengeSpec, PufModel, make_challenge,
                      make_puf, render_response)
from .fhd import BinaryKey, GaborParams, fhd, fhd_stats, gabor_hash
from .database import CrpDatabase, CrpRecord, build_dataset, synthesize
from .protocol import AuthDecision, AuthPolicy, Identification, enroll, identify, verify

__all__ = [
    "ARCHETYPES", "AcquisitionParams", "AuthDecision", "AuthPolicy", "BinaryKey", "ChallengeSpec", "CropCenter",
    "CropCorner", "CropFrame", "CropSide", "CrpDatabase", "CrpRecord", "DEFAULT_ACQUISITION", "DimensionError",
    "FeatureSet", "GaborParams", "Identification", "Keypoints", "MatchParams", "MatchResult", "ParameterError",
    "PufModel", "Rotate", "Scale", "SearchReport", "SiftParams", "SpeckleAuthError", "apply_transform",
    "build_dataset", "detect_and_describe", "enroll", "fhd", "fhd_stats", "gabor_hash", "identify",
    "make_challenge", "make_puf", "match_matrix", "ratio_match", "read_image", "render_response",
    "search_database", "synthesize", "verify", "write_image",
]
