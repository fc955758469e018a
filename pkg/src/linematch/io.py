"""CSV/JSON files for segments, matches and synthetic ground truth.

Floats are written with ``repr`` so a save/load cycle reproduces every
value bit for bit. All writers go through :func:`atomic_write_text`.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import StereoRig
from .geometry import LineSegment2D
from .matcher import Match
from .se3 import PoseSE3
from .synth import VIEWS, Segment3D, SyntheticViews

SEGMENT_HEADER = ("frame", "view", "id", "x1", "y1", "x2", "y2")
MATCH_HEADER = ("ref_id", "cand_id", "residual", "weight")
TRUTH_HEADER = ("frame", "view", "id", "segment3d_id")
SCENE_HEADER = ("id", "px", "py", "pz", "qx", "qy", "qz")

TRUTH_TABLE = "truth_correspondences.csv"
SCENE_FILE = "scene3d.csv"
TRUTH_JSON = "truth.json"


class ParseError(ValueError):
    """Malformed file content; ``row`` is the 1-based line number (header is 1)."""

    def __init__(self, message: str, row: int | None = None, path=None):
        where = f"{path}:" if path is not None else ""
        where += f"{row}: " if row is not None else (" " if where else "")
        super().__init__(f"{where}{message}")
        self.row = row
        self.path = path


class DuplicateId(ParseError):
    pass


class ZeroLengthSegment(ParseError):
    pass


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_rows(path, header):
    """Yield ``(line_number, row)`` after checking the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise ParseError("empty file, expected a header", 1, path)
        if tuple(c.strip() for c in first) != header:
            raise ParseError(f"expected header {','.join(header)}", 1, path)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num, path)
            yield reader.line_num, [c.strip() for c in row]


def _int(text, what, row, path) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{what} is not an integer: {text!r}", row, path) from None


def _float(text, what, row, path) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"{what} is not a number: {text!r}", row, path) from None
    if not math.isfinite(x):
        raise ParseError(f"{what} is not finite", row, path)
    return x


# -- segments ---------------------------------------------------------------

def load_segments(path, into: dict | None = None) -> dict[tuple[int, str], list[LineSegment2D]]:
    """Segment sets keyed by ``(frame, view)``, in file order.

    Passing ``into`` merges another file into an existing collection;
    duplicate ``(frame, view, id)`` triples are rejected across files too.
    """
    sets = {} if into is None else into
    seen = {(k[0], k[1], s.id) for k, segs in sets.items() for s in segs}
    for row_no, row in _read_rows(path, SEGMENT_HEADER):
        frame = _int(row[0], "frame", row_no, path)
        view = row[1]
        if view not in VIEWS:
            raise ParseError(f"view must be one of {VIEWS}, got {view!r}", row_no, path)
        sid = _int(row[2], "id", row_no, path)
        x1, y1, x2, y2 = (_float(v, n, row_no, path) for v, n in zip(row[3:], SEGMENT_HEADER[3:]))
        if (x1, y1) == (x2, y2):
            raise ZeroLengthSegment(f"segment {sid} has zero length", row_no, path)
        if (frame, view, sid) in seen:
            raise DuplicateId(f"duplicate id {sid} in frame {frame} view {view}", row_no, path)
        seen.add((frame, view, sid))
        sets.setdefault((frame, view), []).append(LineSegment2D((x1, y1), (x2, y2), sid))
    return sets


def segments_csv(sets) -> str:
    rows = []
    for (frame, view) in sorted(sets):
        for s in sets[(frame, view)]:
            rows.append([frame, view, s.id, *map(_fmt, (*s.start, *s.end))])
    return _csv_text(SEGMENT_HEADER, rows)


def save_segments(path, sets) -> None:
    atomic_write_text(path, segments_csv(sets))


def segment_file_name(frame: int, view: str) -> str:
    return f"segments_f{frame}_{view}.csv"


def load_segment_dir(directory) -> dict[tuple[int, str], list[LineSegment2D]]:
    """Merge every ``segments*.csv`` in ``directory`` (sorted by name)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files = sorted(directory.glob("segments*.csv"))
    if not files:
        raise FileNotFoundError(f"no segments*.csv files in {directory}")
    sets: dict = {}
    for f in files:
        load_segments(f, into=sets)
    return sets


# -- matches ----------------------------------------------------------------

def matches_csv(matches) -> str:
    rows = [[m.ref_id, m.cand_id, _fmt(m.residual), _fmt(m.weight)] for m in matches]
    return _csv_text(MATCH_HEADER, rows)


def save_matches(path, matches) -> None:
    atomic_write_text(path, matches_csv(matches))


def load_matches(path) -> list[Match]:
    out = []
    for row_no, row in _read_rows(path, MATCH_HEADER):
        out.append(Match(_int(row[0], "ref_id", row_no, path), _int(row[1], "cand_id", row_no, path),
                         _float(row[2], "residual", row_no, path), _float(row[3], "weight", row_no, path)))
    return out


# -- ground truth -----------------------------------------------------------

@dataclass
class GroundTruth:
    rig: StereoRig
    poses: dict[int, PoseSE3]
    scene: dict[int, Segment3D]
    truth: dict[tuple[int, str], dict[int, int]]
    config: dict


def save_synthetic(directory, views: SyntheticViews, config: dict) -> list[Path]:
    """Write the four segment files plus the truth tables; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for key in sorted(views.segments):
        p = directory / segment_file_name(*key)
        save_segments(p, {key: views.segments[key]})
        written.append(p)

    rows = [[f, v, i2, i3] for (f, v) in sorted(views.truth) for i2, i3 in sorted(views.truth[(f, v)].items())]
    p = directory / TRUTH_TABLE
    atomic_write_text(p, _csv_text(TRUTH_HEADER, rows))
    written.append(p)

    rows = [[s.id, *map(_fmt, (*s.p, *s.q))] for s in views.scene]
    p = directory / SCENE_FILE
    atomic_write_text(p, _csv_text(SCENE_HEADER, rows))
    written.append(p)

    meta = {
        "rig": views.rig.to_dict(),
        "poses": {str(k): views.poses[k].matrix().tolist() for k in sorted(views.poses)},
        "config": config,
    }
    p = directory / TRUTH_JSON
    atomic_write_text(p, dumps_json(meta))
    written.append(p)
    return written


def load_ground_truth(directory) -> GroundTruth:
    from .evaluate import MissingGroundTruth

    directory = Path(directory)
    for name in (TRUTH_TABLE, SCENE_FILE, TRUTH_JSON):
        if not (directory / name).is_file():
            raise MissingGroundTruth(f"{directory / name} not found")
    path = directory / TRUTH_JSON
    try:
        meta = json.loads(path.read_text())
        rig = StereoRig.from_dict(meta["rig"])
        poses = {int(k): PoseSE3.from_matrix(np.array(v, dtype=float)) for k, v in meta["poses"].items()}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid ground truth: {exc}", None, path) from None

    truth: dict = {}
    path = directory / TRUTH_TABLE
    for row_no, row in _read_rows(path, TRUTH_HEADER):
        key = (_int(row[0], "frame", row_no, path), row[1])
        truth.setdefault(key, {})[_int(row[2], "id", row_no, path)] = _int(row[3], "segment3d_id", row_no, path)

    scene = {}
    path = directory / SCENE_FILE
    for row_no, row in _read_rows(path, SCENE_HEADER):
        sid = _int(row[0], "id", row_no, path)
        xyz = [_float(v, n, row_no, path) for v, n in zip(row[1:], SCENE_HEADER[1:])]
        try:
            scene[sid] = Segment3D(xyz[:3], xyz[3:], sid)
        except ValueError as exc:
            raise ParseError(str(exc), row_no, path) from None
    return GroundTruth(rig, poses, scene, truth, meta.get("config", {}))
