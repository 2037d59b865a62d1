"""Timing of one-probe-versus-database searches at several worker counts."""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from .database import CrpDatabase, synthesize
from .errors import ParameterError
from .matching import MatchParams, default_threads, search_database
from .protocol import enroll
from .sift import FeatureSet, SiftParams, detect_and_describe
from .speckle import DEFAULT_ACQUISITION, make_puf, render_response, challenge_for

log = logging.getLogger(__name__)


def bench_entries(query: FeatureSet, entries: Sequence[tuple[int, FeatureSet]], threads_list: Sequence[int],
                  p: MatchParams = MatchParams(), repeats: int = 1, threshold: int = 100) -> dict:
    """Time ``search_database`` once per thread count (best of ``repeats``).

    Returns:
        dict with ``rows`` (threads, seconds_total, micros_per_comparison),
        the per-entry counts of the first run, ``counts_identical`` across
        thread counts and ``speedup`` of each row relative to the first.
    """
    if not threads_list:
        raise ParameterError("no thread counts given")
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    rows, reference, identical = [], None, True
    for t in threads_list:
        if t < 1:
            raise ParameterError(f"thread counts must be >= 1, got {t}")
        best = np.inf
        for _ in range(repeats):
            report = search_database(query, entries, p, threads=t, threshold=threshold)
            best = min(best, report.seconds)
            if reference is None:
                reference = report.per_entry_counts
            identical &= report.per_entry_counts == reference
        rows.append({"threads": int(t), "seconds_total": float(best),
                     "micros_per_comparison": float(best / len(entries) * 1e6)})
        log.info("threads=%d: %.3f s", t, best)
    base = rows[0]["seconds_total"]
    for r in rows:
        r["speedup"] = float(base / r["seconds_total"]) if r["seconds_total"] > 0 else None
    return {"n_entries": len(entries), "n_query_features": len(query), "rows": rows,
            "counts_identical": bool(identical), "per_entry_counts": [[e, c] for e, c in reference]}


def bench_search(db_size: int, threads_list: Sequence[int], seed: int = 7, archetype: str = "ps",
                 db_path: Optional[str] = None, repeats: int = 1, build_threads: Optional[int] = None) -> dict:
    """Search a fresh acquisition of challenge 0 through a ``db_size`` database.

    The database is synthesized from ``seed`` (or loaded from ``db_path``
    and truncated to ``db_size``) and enrolled in memory.
    """
    if db_size < 1:
        raise ParameterError("database size must be >= 1")
    workers = build_threads or default_threads()
    if db_path is not None:
        db = CrpDatabase.load(db_path)
        if len(db) < db_size:
            raise ParameterError(f"{db_path} has {len(db)} records, {db_size} requested")
        db = db.subset(db_size)
        for i in range(len(db)):
            db.response(i)
            if db.enrolled:
                db.features(i)
        db.root = None  # never write back into the source directory
    else:
        db = synthesize(archetype, db_size, seed, DEFAULT_ACQUISITION.with_seed(1), threads=workers)
    if not db.enrolled:
        enroll(db, threads=workers)
    puf = make_puf(db.archetype, db.puf_seed)
    rec = db.records[0]
    probe_img = render_response(puf, challenge_for(rec.id, db.dataset_seed, db.challenge_dims, db.challenge_fill),
                                db.acquisition.with_seed(db.acquisition.seed + 1))
    query = detect_and_describe(probe_img, SiftParams(**db.enrollment["sift"]))
    entries = [(r.id, db.features(i)) for i, r in enumerate(db.records)]
    out = bench_entries(query, entries, threads_list, repeats=repeats)
    out["probe_id"] = rec.id
    return out
