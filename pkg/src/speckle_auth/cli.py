"""Command-line entry point: ``speckle-auth <command> ...``.

Every command that writes files also writes ``run.json`` (the parsed
arguments) into its output directory; ``speckle-auth rerun run.json`` replays
it.  Exit codes: 0 success/accept, 1 reject (verify, identify), 2 error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .database import CrpDatabase, synthesize
from .errors import SpeckleAuthError
from .fhd import GaborParams, fhd_stats, tuned_params
from .imaging import CropCenter, CropCorner, CropFrame, CropSide, Scale, read_image, transform_name
from .matching import MatchParams, default_threads, match_matrix
from .protocol import AuthPolicy, DEFAULT_THRESHOLDS, ROTATION_ANGLES, enroll, identify, rotation_suite, \
    scale_crop_transforms, transform_suite, verify
from .sift import SiftParams
from .speckle import ARCHETYPES, DEFAULT_ACQUISITION, AcquisitionParams
from .bench import bench_search

log = logging.getLogger("speckle_auth")

EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


class UsageError(SpeckleAuthError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: Sequence, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(path, buf.getvalue())


def _write_jsonl(path: Path, items) -> None:
    _write_text(path, "".join(json.dumps(it, sort_keys=True) + "\n" for it in items))


def _echo(args: argparse.Namespace, out: Optional[Path]) -> None:
    if out is None:
        return
    conf = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    _write_json(out / "run.json", {"tool": "speckle-auth", "version": __version__, "args": conf})


def _sift_params(args) -> SiftParams:
    return SiftParams(n_features=args.n_features, n_octave_layers=args.octave_layers,
                      contrast_threshold=args.contrast, edge_threshold=args.edge, sigma=args.sigma,
                      octave_downsample=args.octave_downsample)


def _policy(args, archetype: Optional[str]) -> AuthPolicy:
    threshold = args.threshold
    if threshold is None:
        threshold = DEFAULT_THRESHOLDS.get(archetype or "ps", 100)
    return AuthPolicy(threshold=threshold, md=args.md)


def _acq(name: str, seed: int) -> AcquisitionParams:
    if name == "none":
        return AcquisitionParams(seed=seed)
    return DEFAULT_ACQUISITION.with_seed(seed)


def _load_enrolled(path: str, threads: int, n: Optional[int] = None) -> CrpDatabase:
    db = CrpDatabase.load(path)
    if n is not None:
        if n > len(db):
            raise UsageError(f"{path} has {len(db)} records, {n} requested")
        db = db.subset(n)
    if not db.enrolled:
        log.info("%s is not enrolled; computing features in memory", path)
        enroll(_detached(db), threads=threads)
    return db


def _detached(db: CrpDatabase) -> CrpDatabase:
    # enroll in memory without writing into the source directory
    for i in range(len(db)):
        db.response(i)
    db.root = None
    return db


def _figures(args) -> bool:
    return getattr(args, "figures", False)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    puf_seed = args.seed if args.puf_seed is None else args.puf_seed
    db = synthesize(args.archetype, args.n, args.seed, _acq(args.noise, args.acq_seed), puf_seed=puf_seed,
                    threads=args.threads)
    db.save(out)
    _echo(args, out)
    result = {"t0": str(out), "n": len(db)}
    if args.t1_noise != "off":
        t1_out = Path(args.t1_out) if args.t1_out else out.parent / f"{out.name}_t1"
        db1 = synthesize(args.archetype, args.n, args.seed, _acq(args.t1_noise, args.acq_seed + 1),
                         puf_seed=puf_seed, threads=args.threads)
        db1.save(t1_out)
        result["t1"] = str(t1_out)
    print(json.dumps(result))
    return EXIT_OK


def cmd_enroll(args) -> int:
    db = CrpDatabase.load(args.db)
    enroll(db, _sift_params(args), threads=args.threads)
    summary = {"db": str(args.db), "n": len(db), "enrolled": len(db.enrollment["feature_counts"]),
               "errors": db.enrollment["errors"]}
    if args.out:
        out = Path(args.out)
        _echo(args, out)
        _write_json(out / "enroll.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if not db.enrollment["errors"] else EXIT_ERROR


def cmd_verify(args) -> int:
    db = _load_enrolled(args.db, args.threads)
    decision = verify(read_image(args.probe), args.id, db, _policy(args, db.archetype))
    if args.out:
        out = Path(args.out)
        _echo(args, out)
        _write_jsonl(out / "decisions.jsonl", [decision.to_dict()])
    print(json.dumps(decision.to_dict(), sort_keys=True))
    return EXIT_OK if decision.accepted else EXIT_REJECT


def cmd_identify(args) -> int:
    db = _load_enrolled(args.db, args.threads)
    result = identify(read_image(args.probe), db, _policy(args, db.archetype), threads=args.threads)
    if args.out:
        out = Path(args.out)
        _echo(args, out)
        _write_jsonl(out / "identify.jsonl", [result.to_dict()])
        _write_csv(out / "identify.csv", ["entry_id", "count"], result.report.per_entry_counts)
        if _figures(args):
            from .figures import plot_search
            plot_search(result.report, out / "identify.png")
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK if result.in_database else EXIT_REJECT


def _matrix_sets(args):
    if args.db:
        db_a = _load_enrolled(args.db, args.threads, args.n)
        db_b = _load_enrolled(args.db_b, args.threads, args.n) if args.db_b else db_a
    else:
        db_a = synthesize(args.archetype, args.n, args.seed, _acq(args.noise, args.acq_seed), threads=args.threads)
        enroll(db_a, threads=args.threads)
        db_b = db_a
    fa = [db_a.features(i) for i in range(len(db_a))]
    fb = [db_b.features(i) for i in range(len(db_b))]
    return db_a, db_b, fa, fb


def cmd_matrix(args) -> int:
    out = Path(args.out)
    db_a, db_b, fa, fb = _matrix_sets(args)
    summary = {}
    for md in args.md:
        m = match_matrix(fa, fb, MatchParams(md=md), threads=args.threads)
        tag = f"{md:g}"
        _write_csv(out / f"matrix_md{tag}.csv", ["id"] + db_b.ids,
                   [[rid] + row.tolist() for rid, row in zip(db_a.ids, m)])
        diag = np.diag(m) if m.shape[0] == m.shape[1] else np.zeros(0)
        off = m[~np.eye(*m.shape, dtype=bool)]
        summary[tag] = {"diagonal_min": int(diag.min()) if diag.size else None,
                        "off_diagonal_max": int(off.max()) if off.size else None,
                        "off_diagonal_mean": float(off.mean()) if off.size else None}
        if _figures(args):
            from .figures import plot_match_matrix
            plot_match_matrix(m, out / f"matrix_md{tag}.png", md=md)
    _write_json(out / "matrix_summary.json", summary)
    _echo(args, out)
    return EXIT_OK


def cmd_fhd(args) -> int:
    out = Path(args.out)
    db0 = CrpDatabase.load(args.t0)
    db1 = CrpDatabase.load(args.t1)
    if len(db0) != len(db1):
        raise UsageError(f"record counts differ: {len(db0)} vs {len(db1)}")
    p = None
    if args.wavelength is not None:
        p = GaborParams(wavelength=args.wavelength)
    stats = fhd_stats(db0, db1, p)
    centers, like, unlike, ideal = stats.histogram(args.bins)
    _write_csv(out / "fhd_histogram.csv", ["bin_center", "like_count", "unlike_count", "ideal_like_count"],
               [[f"{c:.4f}", int(a), int(b), int(d)] for c, a, b, d in zip(centers, like, unlike, ideal)])
    _write_json(out / "fhd_summary.json", stats.summary())
    if _figures(args):
        from .figures import plot_fhd
        plot_fhd(stats, out / "fhd_histogram.png", bins=args.bins)
    _echo(args, out)
    return EXIT_OK


def cmd_rotate(args) -> int:
    out = Path(args.out)
    db = _load_enrolled(args.db, args.threads, args.n)
    reports = rotation_suite(db, args.angles, _policy(args, db.archetype), threads=args.threads)
    rows = [[f"{r.transform.angle:g}", r.target_id, e, c] for r in reports for e, c in r.per_entry_counts]
    _write_csv(out / "rotation.csv", ["angle", "probe_id", "entry_id", "count"], rows)
    _write_jsonl(out / "rotation.jsonl", [r.to_dict() for r in reports])
    if _figures(args):
        from .figures import plot_rotation
        plot_rotation(reports, out / "rotation.png")
    _echo(args, out)
    return EXIT_OK if all(r.identified for r in reports) else EXIT_REJECT


def _transforms(names: Sequence[str]):
    table = {
        "scale_1.5": Scale(1.5), "scale_0.8": Scale(0.8), "crop_frame": CropFrame(0.10),
        "crop_tl": CropCorner(0.10, "TL"), "crop_right": CropSide(0.10, "right"), "crop_center": CropCenter(0.20),
        "identity": Scale(1.0),
    }
    if not names:
        return scale_crop_transforms()
    try:
        return [table[n] for n in names]
    except KeyError as exc:
        raise UsageError(f"unknown transform {exc.args[0]!r}; choose from {sorted(table)}") from None


def cmd_transform(args) -> int:
    out = Path(args.out)
    db = _load_enrolled(args.db, args.threads, args.n)
    reports = transform_suite(args.target, db, _transforms(args.transforms), _policy(args, db.archetype),
                              threads=args.threads)
    rows = [[transform_name(r.transform), e, c] for r in reports for e, c in r.per_entry_counts]
    _write_csv(out / "transform.csv", ["transform", "entry_id", "count"], rows)
    _write_jsonl(out / "transform.jsonl", [r.to_dict() for r in reports])
    if _figures(args):
        from .figures import plot_transforms
        plot_transforms(reports, out / "transform.png")
    _echo(args, out)
    return EXIT_OK if all(r.identified for r in reports) else EXIT_REJECT


def cmd_bench(args) -> int:
    out = Path(args.out)
    if args.db < 1:
        raise UsageError("--db must be >= 1")
    table = bench_search(args.db, args.threads_list, seed=args.seed, archetype=args.archetype,
                         db_path=args.db_path, repeats=args.repeats)
    _write_csv(out / "bench.csv", ["threads", "seconds_total", "micros_per_comparison"],
               [[r["threads"], f"{r['seconds_total']:.6f}", f"{r['micros_per_comparison']:.3f}"]
                for r in table["rows"]])
    _write_json(out / "bench.json", table)
    if _figures(args):
        from .figures import plot_bench
        plot_bench(table, out / "bench.png")
    _echo(args, out)
    return EXIT_OK


def cmd_rerun(args) -> int:
    conf = json.loads(Path(args.run_json).read_text(encoding="utf-8"))
    saved = dict(conf["args"])
    command = saved.get("command")
    sub = _subparsers(build_parser())
    if command not in sub or command == "rerun":
        raise UsageError(f"{args.run_json}: cannot replay command {command!r}")
    ns = argparse.Namespace()
    for action in sub[command]._actions:
        if action.dest not in ("help", "version"):
            setattr(ns, action.dest, action.default)
    for k, v in sub[command]._defaults.items():
        setattr(ns, k, v)
    for k, v in saved.items():
        setattr(ns, k, v)
    if args.out:
        ns.out = args.out
    ns.verbose = args.verbose
    return ns.func(ns)


def _subparsers(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive, default=None,
                   help="worker cap (default: $SPECKLE_AUTH_THREADS or CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_sift(p: argparse.ArgumentParser) -> None:
    d = SiftParams()
    p.add_argument("--n-features", type=int, default=d.n_features)
    p.add_argument("--octave-layers", type=int, default=d.n_octave_layers)
    p.add_argument("--contrast", type=float, default=d.contrast_threshold)
    p.add_argument("--edge", type=float, default=d.edge_threshold)
    p.add_argument("--sigma", type=float, default=d.sigma)
    p.add_argument("--octave-downsample", type=float, default=d.octave_downsample)


def _add_policy(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=int, default=None,
                   help="minimum match count (default: per-archetype, 100 for ps)")
    p.add_argument("--md", type=float, default=0.7, help="ratio-test threshold")


def _add_synth_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--archetype", choices=sorted(ARCHETYPES), default="ps")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--acq-seed", type=int, default=1)
    p.add_argument("--noise", choices=("default", "none"), default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speckle-auth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a CRP dataset")
    _add_synth_source(p)
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--puf-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--t1-noise", choices=("off", "default", "none"), default="off",
                   help="also write a second acquisition session next to --out")
    p.add_argument("--t1-out", default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("enroll", help="compute and store features for a dataset")
    p.add_argument("--db", required=True)
    p.add_argument("--out", default=None)
    _add_sift(p)
    _add_common(p)
    p.set_defaults(func=cmd_enroll)

    for name, func, helptext in (("verify", cmd_verify, "authenticate a probe against a claimed id"),
                                 ("identify", cmd_identify, "search a probe through the whole database")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--db", required=True)
        p.add_argument("--probe", required=True, help="probe image (PNG/PGM)")
        if name == "verify":
            p.add_argument("--id", type=int, required=True)
        else:
            p.add_argument("--figures", action="store_true", help="also render PNG figures")
        p.add_argument("--out", default=None)
        _add_policy(p)
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("matrix", help="match-count matrices over an Md sweep")
    p.add_argument("--db", default=None, help="enrolled dataset (default: synthesize one)")
    p.add_argument("--db-b", default=None, help="second dataset for cross-session matrices")
    p.add_argument("--n", type=_positive, default=20)
    p.add_argument("--md", type=_floats, default=[0.5, 0.7, 0.9])
    _add_synth_source(p)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("fhd", help="Gabor-hash FHD like/unlike distributions")
    p.add_argument("t0")
    p.add_argument("t1")
    p.add_argument("--wavelength", type=float, default=None, help="default: measured grain size")
    p.add_argument("--bins", type=_positive, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_fhd)

    p = sub.add_parser("rotate", help="rotation robustness suite")
    p.add_argument("--db", required=True)
    p.add_argument("--n", type=_positive, default=20)
    p.add_argument("--angles", type=_floats, default=list(ROTATION_ANGLES))
    _add_policy(p)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("transform", help="scale/crop identification suite")
    p.add_argument("--db", required=True)
    p.add_argument("--n", type=_positive, default=None, help="use the first N records (default: all)")
    p.add_argument("--target", type=int, default=100)
    p.add_argument("--transforms", type=lambda s: [t for t in s.split(",") if t], default=[])
    _add_policy(p)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("bench", help="time one-vs-database search at several thread counts")
    p.add_argument("--db", type=int, default=1000, help="database size")
    p.add_argument("--db-path", default=None, help="use an existing dataset instead of synthesizing")
    p.add_argument("--threads", dest="threads_list", type=_ints, default=[1, 4])
    p.add_argument("--repeats", type=_positive, default=1)
    p.add_argument("--archetype", choices=sorted(ARCHETYPES), default="ps")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rerun", help="replay a run.json config echo")
    p.add_argument("run_json")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "threads") and args.threads is None:
        try:
            args.threads = default_threads()
        except SpeckleAuthError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
    try:
        return args.func(args)
    except (SpeckleAuthError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
