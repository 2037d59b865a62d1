"""Optional PNG renderings of the CLI tables (``--figures``).

Uses the non-interactive Agg backend and strips timestamps from the PNG
metadata so identical inputs give identical files.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fhd import FhdStats  # noqa: E402
from .imaging import transform_name  # noqa: E402
from .matching import SearchReport  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_match_matrix(counts: np.ndarray, path: Path, md: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(counts, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="matches")
    ax.set_xlabel("database entry")
    ax.set_ylabel("probe")
    if md is not None:
        ax.set_title(f"Md = {md:g}")
    return _save(fig, path)


def plot_fhd(stats: FhdStats, path: Path, bins: int = 50) -> Path:
    centers, like, unlike, ideal = stats.histogram(bins)
    width = centers[1] - centers[0] if len(centers) > 1 else 1.0
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for counts, label in ((ideal, "ideal like"), (like, "like"), (unlike, "unlike")):
        total = counts.sum()
        ax.bar(centers, counts / total if total else counts, width=width, alpha=0.6, label=label)
    ax.set_xlabel("fractional Hamming distance")
    ax.set_ylabel("frequency")
    ax.set_xlim(0, 1)
    ax.legend()
    return _save(fig, path)


def plot_search(report: SearchReport, path: Path) -> Path:
    ids = [e for e, _ in report.per_entry_counts]
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(ids, report.counts, lw=0.8)
    ax.axhline(report.threshold, color="r", ls="--", lw=0.8, label="threshold")
    ax.set_xlabel("database entry")
    ax.set_ylabel("matches")
    ax.legend()
    return _save(fig, path)


def plot_rotation(reports: Sequence, path: Path) -> Path:
    angles = sorted({r.transform.angle for r in reports})
    fig, ax = plt.subplots(figsize=(6, 3.5))
    genuine = [[r.genuine_count for r in reports if r.transform.angle == a] for a in angles]
    impostor = [max(max(r.impostor_counts, default=0) for r in reports if r.transform.angle == a) for a in angles]
    ax.boxplot(genuine, positions=range(len(angles)))
    ax.plot(range(len(angles)), impostor, "rx", label="max impostor")
    ax.set_xticks(range(len(angles)), [f"{a:g}" for a in angles])
    ax.set_xlabel("rotation (deg)")
    ax.set_ylabel("matches")
    ax.legend()
    return _save(fig, path)


def plot_transforms(reports: Sequence, path: Path) -> Path:
    fig, axes = plt.subplots(len(reports), 1, figsize=(6, 1.6 * len(reports)), sharex=True, squeeze=False)
    for ax, r in zip(axes[:, 0], reports):
        ids = [e for e, _ in r.per_entry_counts]
        ax.plot(ids, r.report.counts, lw=0.7)
        ax.axhline(r.report.threshold, color="r", ls="--", lw=0.7)
        ax.set_title(transform_name(r.transform), fontsize=8)
        ax.set_ylabel("matches", fontsize=8)
    axes[-1, 0].set_xlabel("database entry")
    return _save(fig, path)


def plot_bench(table: dict, path: Path) -> Path:
    rows = table["rows"]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot([r["threads"] for r in rows], [r["seconds_total"] for r in rows], "o-")
    ax.set_xlabel("threads")
    ax.set_ylabel("search time (s)")
    return _save(fig, path)
