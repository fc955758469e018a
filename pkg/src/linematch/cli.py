"""Command line entry point: ``linematch {match,synth,eval,bench}``.

Exit codes: 0 success, 1 file system errors, 2 malformed input files,
3 invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import io as lio
from .evaluate import MissingGroundTruth, evaluate
from .geometry import MatchMode
from .matcher import MatchConfig, default_workers, match_sets
from .sparse import SolverConfig
from .synth import ConfigError, SceneConfig, synthesize
from .bench import format_table, run_bench

EXIT_OK, EXIT_IO, EXIT_PARSE, EXIT_CONFIG = 0, 1, 2, 3

MATCH_CONFIG_KEYS = {"lambda", "max_iters", "tolerance", "row_weights", "uniqueness_factor",
                     "sigma_multiplier", "min_overlap", "apply_filter", "workers"}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_json(path, code_on_bad=EXIT_CONFIG) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", code_on_bad) from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: expected a JSON object", code_on_bad)
    return data


def load_match_config(path, mode) -> tuple[MatchConfig, bool, int | None]:
    """Matcher settings from an optional JSON file: ``(config, apply_filter, workers)``."""
    data = _read_json(path) if path else {}
    unknown = sorted(set(data) - MATCH_CONFIG_KEYS)
    if unknown:
        raise CliError(f"config: unknown field {unknown[0]!r}", EXIT_CONFIG)
    try:
        rw = data.get("row_weights")
        if rw is not None and len(rw) != 4:
            raise ValueError("row_weights: expected 4 values")
        solver = SolverConfig(lam=float(data.get("lambda", 0.1)), max_iters=data.get("max_iters"),
                              tolerance=float(data.get("tolerance", 1e-9)),
                              row_weights=tuple(float(v) for v in rw) if rw is not None else None)
        cfg = MatchConfig(mode=mode, solver=solver,
                          uniqueness_factor=float(data.get("uniqueness_factor", 2.0)),
                          sigma_multiplier=float(data.get("sigma_multiplier", 2.0)),
                          min_overlap=float(data.get("min_overlap", 0.0)))
        workers = data.get("workers")
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            raise ValueError("workers: expected a positive integer")
    except (TypeError, ValueError) as exc:
        raise CliError(f"config: {exc}", EXIT_CONFIG) from None
    return cfg, bool(data.get("apply_filter", True)), workers


def match_jobs(sets, mode: MatchMode):
    """``(name, ref_key, cand_key)`` for every pair of views to match, in a fixed order."""
    jobs = []
    frames = sorted({f for f, _ in sets})
    if mode is MatchMode.STEREO:
        for f in frames:
            if (f, "L") in sets and (f, "R") in sets:
                jobs.append((f"stereo_f{f}", (f, "L"), (f, "R")))
    else:
        for view in ("L", "R"):
            for f in frames:
                if (f, view) in sets and (f + 1, view) in sets:
                    jobs.append((f"f2f_{view}_f{f}", (f, view), (f + 1, view)))
    return jobs


def cmd_match(args) -> int:
    try:
        mode = MatchMode.parse(args.mode)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    cfg, apply_filter, workers = load_match_config(args.config, mode)
    if workers is None:
        workers = default_workers()
    sets = lio.load_segment_dir(args.in_dir)
    jobs = match_jobs(sets, mode)
    if not jobs:
        raise CliError(f"no view pairs to match in {args.in_dir} for mode {mode.value}", EXIT_PARSE)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, k1, k2 in jobs:
        t0 = time.perf_counter()
        result = match_sets(sets[k1], sets[k2], cfg, workers=workers, apply_filter=apply_filter)
        elapsed = 1e3 * (time.perf_counter() - t0)
        lio.save_matches(out / f"{name}.csv", result.matches)
        stats = {
            "mode": mode.value,
            "ref": {"frame": k1[0], "view": k1[1], "count": len(sets[k1])},
            "cand": {"frame": k2[0], "view": k2[1], "count": len(sets[k2])},
            "match_count": len(result),
            "rejections": result.rejection_counts(),
            "filter_applied": apply_filter,
        }
        lio.atomic_write_text(out / f"{name}.stats.json", lio.dumps_json(stats))
        # wall-clock numbers live in their own file so the rest stays reproducible
        lio.atomic_write_text(out / f"{name}.timing.json",
                              lio.dumps_json({"match_ms": elapsed, "workers": workers}))
        print(f"{name}: {len(result)} matches -> {out / (name + '.csv')}")
    return EXIT_OK


def cmd_synth(args) -> int:
    data = _read_json(args.config) if args.config else {}
    try:
        cfg = SceneConfig.from_dict(data)
    except ConfigError as exc:
        raise CliError(f"config: {exc}", EXIT_CONFIG) from None
    views = synthesize(cfg)
    written = lio.save_synthetic(args.out, views, cfg.to_dict())
    for p in written:
        print(p)
    return EXIT_OK


def _sidecar(path: Path, suffix: str):
    side = path.with_name(path.stem + suffix)
    return _read_json(side, EXIT_PARSE) if side.is_file() else None


def cmd_eval(args) -> int:
    matches_path = Path(args.matches)
    if not matches_path.is_file():
        raise CliError(f"cannot read {matches_path}: no such file", EXIT_IO)
    stats = _sidecar(matches_path, ".stats.json")
    if stats is None:
        raise CliError(f"{matches_path.stem}.stats.json not found next to the matches file", EXIT_IO)
    try:
        k1 = (int(stats["ref"]["frame"]), str(stats["ref"]["view"]))
        k2 = (int(stats["cand"]["frame"]), str(stats["cand"]["view"]))
    except (KeyError, TypeError, ValueError):
        raise CliError("stats sidecar lacks ref/cand view keys", EXIT_PARSE) from None

    matches = lio.load_matches(matches_path)
    gt = lio.load_ground_truth(args.truth)
    sets = lio.load_segment_dir(args.segments or args.truth)
    for key in (k1, k2):
        if key not in sets:
            raise MissingGroundTruth(f"no segments for view {key}")
    known1, known2 = {s.id for s in sets[k1]}, {s.id for s in sets[k2]}
    for row, m in enumerate(matches, start=2):
        if m.ref_id not in known1 or m.cand_id not in known2:
            raise CliError(f"{matches_path}:{row}: ids ({m.ref_id}, {m.cand_id}) not found in views {k1}, {k2}",
                           EXIT_PARSE)
    timing = _sidecar(matches_path, ".timing.json") if args.timing else None
    report = evaluate(matches, sets[k1], sets[k2], k1, k2, scene=gt.scene, poses=gt.poses, rig=gt.rig,
                      truth=gt.truth, threshold=args.threshold, rejections=stats.get("rejections"),
                      timing_ms={"match": timing["match_ms"]} if timing else None)
    text = lio.dumps_json(report.to_dict())
    if args.out:
        lio.atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _sizes(text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(n < 1 for n in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise CliError("--reps must be >= 1", EXIT_CONFIG)
    rows = run_bench(args.sizes, args.reps, workers=args.workers)
    sys.stdout.write(format_table(rows))
    if args.json:
        lio.atomic_write_text(args.json, lio.dumps_json({"workers": args.workers, "results": rows}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linematch", description="Sparse L1 line segment matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match segment sets from a directory of segment CSV files")
    p.add_argument("--mode", required=True, choices=["stereo", "f2f"])
    p.add_argument("--in", dest="in_dir", required=True, help="directory with segments*.csv")
    p.add_argument("--config", help="JSON matcher settings (optional)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("synth", help="generate a synthetic stereo scene over two frames")
    p.add_argument("--config", help="JSON scene settings (optional, defaults otherwise)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score a matches CSV against synthetic ground truth")
    p.add_argument("--matches", required=True)
    p.add_argument("--truth", required=True, help="directory written by 'linematch synth'")
    p.add_argument("--segments", help="segment directory (default: the truth directory)")
    p.add_argument("--threshold", type=float, default=1.0, help="inlier distance in pixels")
    p.add_argument("--timing", action="store_true", help="copy wall-clock figures into the report")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time the matching stage")
    p.add_argument("--sizes", type=_sizes, default=[50, 100, 200], help="comma-separated m = n values")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", help="write results as JSON")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        msg, code = str(exc), exc.code
    except lio.ParseError as exc:
        msg, code = str(exc), EXIT_PARSE
    except ConfigError as exc:
        msg, code = f"config: {exc}", EXIT_CONFIG
    except MissingGroundTruth as exc:
        msg, code = f"missing ground truth: {exc.args[0] if exc.args else exc}", EXIT_IO
    except OSError as exc:
        msg, code = f"{exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), EXIT_IO
    print(f"linematch: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
