"""Enrollment, verification and identification against a CRP database.

Also hosts the robustness experiments: rotated probes matched against their
originals, and scaled/cropped probes searched through a large database.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .database import CrpDatabase
from .errors import ParameterError
from .imaging import (CropCenter, CropCorner, CropFrame, CropSide, GrayImage, Rotate, Scale, Transform,
                      apply_transform, transform_name)
from .matching import MatchParams, SearchReport, match_matrix, ratio_match, search_database
from .sift import FeatureSet, SiftParams, detect_and_describe

log = logging.getLogger(__name__)

# Per-archetype thresholds placed in the gap between genuine and impostor counts.
DEFAULT_THRESHOLDS = {"ps": 100, "pdlc": 400, "tio2": 200}

ROTATION_ANGLES = (0.0, 15.0, 30.0, 45.0, 60.0, 90.0)


@dataclass(frozen=True)
class AuthPolicy:
    threshold: int = 100
    md: float = 0.7

    def __post_init__(self):
        if self.threshold < 1:
            raise ParameterError(f"threshold must be >= 1, got {self.threshold}")
        MatchParams(self.md)

    @property
    def match_params(self) -> MatchParams:
        return MatchParams(md=self.md)

    @classmethod
    def for_archetype(cls, archetype: str, md: float = 0.7) -> "AuthPolicy":
        return cls(DEFAULT_THRESHOLDS[archetype.lower()], md)


@dataclass(frozen=True)
class AuthDecision:
    claimed_id: int
    match_count: int
    accepted: bool
    margin: int
    threshold: int

    def to_dict(self) -> dict:
        return {"claimed_id": self.claimed_id, "match_count": self.match_count, "accepted": self.accepted,
                "margin": self.margin, "threshold": self.threshold}


@dataclass
class Identification:
    report: SearchReport

    @property
    def hits(self) -> list[int]:
        return self.report.above_threshold

    @property
    def in_database(self) -> bool:
        return len(self.hits) == 1

    @property
    def identified_id(self) -> Optional[int]:
        return self.hits[0] if self.in_database else None

    def to_dict(self) -> dict:
        return {**self.report.to_dict(), "in_database": self.in_database, "identified_id": self.identified_id}


@dataclass
class RobustnessReport:
    transform: Transform
    target_id: int
    report: SearchReport

    @property
    def per_entry_counts(self) -> list[tuple[int, int]]:
        return self.report.per_entry_counts

    @property
    def identified(self) -> bool:
        return self.report.above_threshold == [self.target_id]

    @property
    def genuine_count(self) -> int:
        return dict(self.per_entry_counts)[self.target_id]

    @property
    def impostor_counts(self) -> list[int]:
        return [c for e, c in self.per_entry_counts if e != self.target_id]

    def to_dict(self) -> dict:
        return {"transform": transform_name(self.transform), "target_id": self.target_id,
                "identified": self.identified, **self.report.to_dict()}


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def enroll(db: CrpDatabase, p: SiftParams = SiftParams(), threads: int = 1) -> CrpDatabase:
    """Compute and attach a FeatureSet to every record.

    Records whose image cannot be read are listed under ``errors`` in the
    enrollment summary and left without features.  When the database lives on
    disk the feature files and manifest are written back.
    """
    if len(db) == 0:
        raise ParameterError("cannot enroll an empty database")
    errors: dict[int, str] = {}

    def describe(i: int) -> Optional[FeatureSet]:
        try:
            return detect_and_describe(db.response(i), p)
        except (OSError, ValueError) as exc:
            errors[db.records[i].id] = f"{type(exc).__name__}: {exc}"
            log.warning("record %d not enrolled: %s", db.records[i].id, exc)
            return None

    sets = _map(describe, list(range(len(db))), threads)
    for rec, fs in zip(db.records, sets):
        rec.features = fs
    db.enrollment = {
        "sift": p.to_dict(),
        "feature_counts": {str(r.id): len(r.features) for r in db.records if r.features is not None},
        "errors": {str(k): v for k, v in sorted(errors.items())},
    }
    if db.root is not None:
        db.save_features()
        db.write_manifest()
    return db


def _sift_params(db: CrpDatabase) -> SiftParams:
    return SiftParams(**db.enrollment["sift"]) if db.enrollment else SiftParams()


def _entries(db: CrpDatabase) -> list[tuple[int, FeatureSet]]:
    return [(rec.id, db.features(i)) for i, rec in enumerate(db.records) if db.enrollment is None
            or str(rec.id) in db.enrollment["feature_counts"]]


def verify(response: GrayImage, claimed_id: int, db: CrpDatabase, policy: AuthPolicy = AuthPolicy()) -> AuthDecision:
    """Accept iff the probe shares at least ``policy.threshold`` matches with the claimed record."""
    idx = db.index_of(claimed_id)
    probe = detect_and_describe(response, _sift_params(db))
    count = ratio_match(probe, db.features(idx), policy.match_params).count
    return AuthDecision(claimed_id, count, count >= policy.threshold, count - policy.threshold, policy.threshold)


def identify_features(probe: FeatureSet, db: CrpDatabase, policy: AuthPolicy = AuthPolicy(),
                      threads: int = 1) -> Identification:
    report = search_database(probe, _entries(db), policy.match_params, threads=threads, threshold=policy.threshold)
    return Identification(report)


def identify(response: GrayImage, db: CrpDatabase, policy: AuthPolicy = AuthPolicy(), threads: int = 1) -> Identification:
    """Search the whole database; "in database" means exactly one entry reaches the threshold."""
    return identify_features(detect_and_describe(response, _sift_params(db)), db, policy, threads)


def rotation_suite(db: CrpDatabase, angles: Sequence[float] = ROTATION_ANGLES, policy: AuthPolicy = AuthPolicy(),
                   threads: int = 1) -> list[RobustnessReport]:
    """Rotate every response and match it against all originals of ``db``."""
    p = _sift_params(db)
    entries = _entries(db)
    jobs = [(a, i) for a in angles for i in range(len(db))]

    def run(job):
        angle, i = job
        probe = detect_and_describe(apply_transform(db.response(i), Rotate(angle % 360.0)), p)
        report = search_database(probe, entries, policy.match_params, threshold=policy.threshold)
        return RobustnessReport(Rotate(angle % 360.0), db.records[i].id, report)

    return _map(run, jobs, threads)


def scale_crop_transforms() -> list[Transform]:
    return [Scale(1.5), Scale(0.8), CropFrame(0.10), CropCorner(0.10, "TL"), CropSide(0.10, "right"),
            CropCenter(0.20)]


def transform_suite(target_id: int, db: CrpDatabase, transforms: Optional[Sequence[Transform]] = None,
                    policy: AuthPolicy = AuthPolicy(), threads: int = 1) -> list[RobustnessReport]:
    """Search transformed copies of one enrolled response through the whole database."""
    idx = db.index_of(target_id)
    transforms = scale_crop_transforms() if transforms is None else list(transforms)
    p = _sift_params(db)
    entries = _entries(db)
    out = []
    for t in transforms:
        probe = detect_and_describe(apply_transform(db.response(idx), t), p)
        report = search_database(probe, entries, policy.match_params, threads=threads, threshold=policy.threshold)
        out.append(RobustnessReport(t, target_id, report))
    return out


def genuine_impostor_counts(db_a: CrpDatabase, db_b: CrpDatabase, md: float = 0.7,
                            threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Match counts for same-challenge pairs and for all cross pairs ``i != j``."""
    if db_a.ids != db_b.ids:
        raise ParameterError("databases are not aligned on challenge ids")
    fa = [db_a.features(i) for i in range(len(db_a))]
    fb = [db_b.features(i) for i in range(len(db_b))]
    m = match_matrix(fa, fb, MatchParams(md), threads=threads)
    off = ~np.eye(len(fa), dtype=bool)
    return np.diag(m).copy(), m[off]
