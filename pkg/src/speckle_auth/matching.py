"""Descriptor matching with the nearest/second-nearest ratio test.

Nearest neighbors are exact: distances come from a blocked ``float32`` matrix
product, and the three best candidates per query are re-ranked with
``float64`` differences so decisions do not depend on rounding in the
shortlist.  Database searches fan out over a thread pool (numpy releases the
GIL in the heavy kernels); results never depend on the worker count.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ParameterError
from .sift import FeatureSet

THREADS_ENV = "SPECKLE_AUTH_THREADS"
_BLOCK = 2048
_SHORTLIST = 3


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            n = int(value)
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
        if n < 1:
            raise ParameterError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class MatchParams:
    md: float = 0.7
    cross_check: bool = False
    unique: bool = True

    def __post_init__(self):
        if not 0.0 < self.md <= 1.0:
            raise ParameterError(f"md must be in (0, 1], got {self.md}")


@dataclass
class MatchResult:
    """Accepted correspondences, ordered by ``index_a``."""

    index_a: NDArray[np.int64]
    index_b: NDArray[np.int64]
    distance: NDArray[np.float64]

    @property
    def count(self) -> int:
        return len(self.index_a)

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(d)) for i, j, d in zip(self.index_a, self.index_b, self.distance)]

    @classmethod
    def empty(cls) -> "MatchResult":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))


def _descriptors(fs) -> NDArray[np.float32]:
    d = fs.descriptors if isinstance(fs, FeatureSet) else fs
    return np.ascontiguousarray(d, dtype=np.float32)


def nearest_two(a: NDArray[np.float32], b: NDArray[np.float32]):
    """For each row of ``a``: (nearest index, its distance, second distance) in ``b``.

    Ties resolve to the lowest index.  With a single row in ``b`` the second
    distance is ``inf``.
    """
    na, nb = len(a), len(b)
    idx1 = np.zeros(na, dtype=np.int64)
    d1 = np.full(na, np.inf)
    d2 = np.full(na, np.inf)
    if na == 0 or nb == 0:
        return idx1, d1, d2
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    b_sq = np.einsum("ij,ij->i", b, b)
    k = min(_SHORTLIST, nb)
    for start in range(0, na, _BLOCK):
        blk = a[start:start + _BLOCK]
        sq = b_sq[None, :] - 2.0 * (blk @ b.T)
        rows = np.arange(len(blk))
        cand = np.empty((len(blk), k), dtype=np.int64)
        for t in range(k):
            cand[:, t] = sq.argmin(axis=1)
            sq[rows, cand[:, t]] = np.inf
        diff = a64[start:start + len(blk), None, :] - b64[cand]
        exact = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        order = np.lexsort((cand, exact), axis=1)
        cand = np.take_along_axis(cand, order, axis=1)
        exact = np.take_along_axis(exact, order, axis=1)
        idx1[start:start + len(blk)] = cand[:, 0]
        d1[start:start + len(blk)] = exact[:, 0]
        if k > 1:
            d2[start:start + len(blk)] = exact[:, 1]
    return idx1, d1, d2


def ratio_match(a: FeatureSet, b: FeatureSet, p: MatchParams = MatchParams()) -> MatchResult:
    """Ratio-test matches from ``a`` into ``b``.

    A feature of ``a`` is accepted when its nearest distance is below
    ``md`` times the second-nearest.  With ``p.unique`` each feature of ``b``
    keeps only the accepted ``a`` feature with the smallest distance.
    """
    da, db = _descriptors(a), _descriptors(b)
    if len(da) == 0 or len(db) == 0:
        return MatchResult.empty()
    idx1, d1, d2 = nearest_two(da, db)
    accept = d1 < p.md * d2
    ia = np.nonzero(accept)[0]
    ib = idx1[ia]
    dist = d1[ia]
    if p.cross_check and len(ia):
        back, _, _ = nearest_two(db[ib], da)
        keep = back == ia
        ia, ib, dist = ia[keep], ib[keep], dist[keep]
    if p.unique and len(ia):
        order = np.lexsort((ia, dist, ib))
        ib_sorted = ib[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = ib_sorted[1:] != ib_sorted[:-1]
        keep = np.sort(order[first])
        ia, ib, dist = ia[keep], ib[keep], dist[keep]
    return MatchResult(ia.astype(np.int64), ib.astype(np.int64), dist)


def match_count(a: FeatureSet, b: FeatureSet, p: MatchParams = MatchParams()) -> int:
    return ratio_match(a, b, p).count


def _run(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def match_matrix(set_a: Sequence[FeatureSet], set_b: Sequence[FeatureSet], p: MatchParams = MatchParams(),
                 threads: int = 1) -> NDArray[np.int64]:
    """``counts[i, j] = ratio_match(set_a[i], set_b[j]).count``."""
    if not set_a or not set_b:
        raise ParameterError("match_matrix needs non-empty lists")
    if threads < 1:
        raise ParameterError("threads must be >= 1")
    cells = [(i, j) for i in range(len(set_a)) for j in range(len(set_b))]
    counts = _run(lambda ij: ratio_match(set_a[ij[0]], set_b[ij[1]], p).count, cells, threads)
    return np.asarray(counts, dtype=np.int64).reshape(len(set_a), len(set_b))


@dataclass
class SearchReport:
    """Match counts of one query against every database entry."""

    per_entry_counts: list[tuple[int, int]]
    threshold: int
    seconds: float = field(default=0.0, compare=False)

    @property
    def counts(self) -> NDArray[np.int64]:
        return np.asarray([c for _, c in self.per_entry_counts], dtype=np.int64)

    @property
    def best(self) -> int:
        # max count, lowest id on ties
        return min(self.per_entry_counts, key=lambda ec: (-ec[1], ec[0]))[0]

    @property
    def above_threshold(self) -> list[int]:
        return [e for e, c in self.per_entry_counts if c >= self.threshold]

    def to_dict(self) -> dict:
        return {
            "per_entry_counts": [[e, c] for e, c in self.per_entry_counts],
            "best": self.best,
            "above_threshold": self.above_threshold,
            "threshold": self.threshold,
        }


def search_database(query: FeatureSet, db: Sequence[tuple[int, FeatureSet]], p: MatchParams = MatchParams(),
                    threads: int = 1, threshold: int = 100) -> SearchReport:
    """Match ``query`` against every entry, spreading entries over ``threads`` workers."""
    if not db:
        raise ParameterError("database is empty")
    if threads < 1:
        raise ParameterError("threads must be >= 1")
    q = _descriptors(query)
    t0 = time.perf_counter()
    counts = _run(lambda entry: ratio_match(q, entry[1], p).count, list(db), threads)
    elapsed = time.perf_counter() - t0
    per_entry = [(int(eid), int(c)) for (eid, _), c in zip(db, counts)]
    return SearchReport(per_entry, threshold, elapsed)
