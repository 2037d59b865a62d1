"""Challenge-response databases, in memory and on disk.

On-disk layout::

    <root>/manifest.json
    <root>/responses/NNNN.png
    <root>/features/NNNN.sft      (after enrollment)
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from .errors import ParameterError
from .featureio import read_features, write_features
from .imaging import GrayImage, read_image, write_image
from .sift import FeatureSet
from .speckle import AcquisitionParams, PufModel, challenge_for, make_puf, render_response

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT = "speckle-auth-crp/1"


@dataclass
class CrpRecord:
    id: int
    challenge_seed: int
    image: Optional[GrayImage] = field(default=None, repr=False)
    features: Optional[FeatureSet] = field(default=None, repr=False)


@dataclass
class CrpDatabase:
    """Ordered challenge-indexed responses of one PUF plus provenance."""

    archetype: str
    puf_seed: int
    dataset_seed: int
    acquisition: AcquisitionParams
    records: list[CrpRecord]
    challenge_dims: tuple[int, int] = (16, 16)
    challenge_fill: float = 0.5
    root: Optional[Path] = None
    created: Optional[str] = None
    enrollment: Optional[dict] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[int]:
        return [r.id for r in self.records]

    def index_of(self, record_id: int) -> int:
        for i, r in enumerate(self.records):
            if r.id == record_id:
                return i
        raise ParameterError(f"record id {record_id} not in database")

    def response(self, i: int) -> GrayImage:
        rec = self.records[i]
        if rec.image is None:
            if self.root is None:
                raise ParameterError(f"record {rec.id} has no image")
            rec.image = read_image(self.root / "responses" / f"{rec.id:04d}.png")
        return rec.image

    def features(self, i: int) -> FeatureSet:
        rec = self.records[i]
        if rec.features is None:
            path = None if self.root is None else self.root / "features" / f"{rec.id:04d}.sft"
            if path is None or not path.exists():
                raise ParameterError(f"record {rec.id} is not enrolled")
            rec.features = read_features(path)
        return rec.features

    @property
    def enrolled(self) -> bool:
        return self.enrollment is not None

    def subset(self, count: int) -> "CrpDatabase":
        """The first ``count`` records, sharing images and features."""
        return CrpDatabase(self.archetype, self.puf_seed, self.dataset_seed, self.acquisition,
                           self.records[:count], self.challenge_dims, self.challenge_fill, self.root,
                           self.created, self.enrollment)

    def manifest(self) -> dict:
        out = {
            "format": FORMAT,
            "puf": {"archetype": self.archetype, "seed": self.puf_seed},
            "seeds": {"dataset": self.dataset_seed, "acquisition": self.acquisition.seed},
            "n": len(self.records),
            "acquisition": self.acquisition.to_dict(),
            "challenge": {"dims": list(self.challenge_dims), "fill": self.challenge_fill},
            "created": self.created,
            "records": [{"id": r.id, "challenge_seed": str(r.challenge_seed),
                         "response": f"responses/{r.id:04d}.png"} for r in self.records],
        }
        if self.enrollment is not None:
            out["enrollment"] = self.enrollment
        return out

    def save(self, root: Union[str, Path]) -> Path:
        root = Path(root)
        (root / "responses").mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(self.records):
            write_image(root / "responses" / f"{rec.id:04d}.png", self.response(i))
        if self.created is None:
            self.created = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        self.root = root
        if self.enrollment is not None:
            self.save_features()
        self.write_manifest()
        return root

    def save_features(self) -> None:
        if self.root is None:
            raise ParameterError("database has no directory")
        (self.root / "features").mkdir(exist_ok=True)
        for rec in self.records:
            if rec.features is not None:
                write_features(self.root / "features" / f"{rec.id:04d}.sft", rec.features)

    def write_manifest(self) -> None:
        text = json.dumps(self.manifest(), indent=2) + "\n"
        (self.root / MANIFEST).write_text(text, encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, root: Union[str, Path]) -> "CrpDatabase":
        root = Path(root)
        path = root / MANIFEST
        if not path.is_file():
            raise FileNotFoundError(f"no {MANIFEST} in {root}")
        m = json.loads(path.read_text(encoding="utf-8"))
        if m.get("format") != FORMAT:
            raise ParameterError(f"{path}: unsupported format {m.get('format')!r}")
        acq = AcquisitionParams(**m["acquisition"])
        records = [CrpRecord(int(r["id"]), int(r["challenge_seed"])) for r in m["records"]]
        return cls(m["puf"]["archetype"], int(m["puf"]["seed"]), int(m["seeds"]["dataset"]), acq, records,
                   tuple(m["challenge"]["dims"]), float(m["challenge"]["fill"]), root, m.get("created"),
                   m.get("enrollment"))


def build_dataset(puf: PufModel, n: int, acq: AcquisitionParams, seed: int, threads: int = 1,
                  dims: tuple[int, int] = (16, 16), fill: float = 0.5, start: int = 0) -> CrpDatabase:
    """Render responses to challenges ``start .. start+n-1`` of the dataset seeded by ``seed``.

    The challenges depend only on ``seed``; calling again with a different
    ``acq.seed`` gives a second acquisition session (t1) of the same CRPs.
    """
    if n < 1:
        raise ParameterError(f"dataset needs at least one record, got n={n}")
    challenges = [challenge_for(i, seed, dims, fill) for i in range(start, start + n)]

    def render(c):
        return render_response(puf, c, acq)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            images = list(pool.map(render, challenges))
    else:
        images = [render(c) for c in challenges]
    records = [CrpRecord(c.id, c.seed, img) for c, img in zip(challenges, images)]
    return CrpDatabase(puf.archetype, puf.seed, seed, acq, records, dims, fill)


def synthesize(archetype: str, n: int, seed: int, acq: AcquisitionParams, puf_seed: Optional[int] = None,
               threads: int = 1, start: int = 0) -> CrpDatabase:
    puf = make_puf(archetype, seed if puf_seed is None else puf_seed)
    return build_dataset(puf, n, acq, seed, threads=threads, start=start)
