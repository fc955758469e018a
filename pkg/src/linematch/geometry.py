"""Geometric quantities between pairs of oriented 2D line segments.

Every function here is pure. The scalar functions operate on
:class:`LineSegment2D` values; :func:`pairwise_error_vectors` evaluates the
same formulas for every (reference, candidate) pair at once and is what the
matcher uses on full segment sets.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

#: Residual target for a perfect match: zero angle, zero epipolar angle,
#: full overlap, equal lengths.
TARGET = np.array([0.0, 0.0, 1.0, 1.0])


class MatchMode(enum.Enum):
    STEREO = "stereo"
    FRAME_TO_FRAME = "f2f"

    @classmethod
    def parse(cls, value: "str | MatchMode") -> "MatchMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"stereo": cls.STEREO, "f2f": cls.FRAME_TO_FRAME,
                   "frametoframe": cls.FRAME_TO_FRAME}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown match mode {value!r}") from None


@dataclass(frozen=True)
class LineSegment2D:
    """Oriented segment from ``start`` to ``end`` in pixel coordinates.

    Endpoint order is kept as given; it encodes the detector's gradient
    orientation and is never canonicalized.
    """

    start: tuple[float, float]
    end: tuple[float, float]
    id: int = 0

    def __post_init__(self):
        start = (float(self.start[0]), float(self.start[1]))
        end = (float(self.end[0]), float(self.end[1]))
        if not all(math.isfinite(v) for v in start + end):
            raise ValueError(f"segment {self.id}: non-finite endpoint")
        if start == end or math.hypot(start[0] - end[0], start[1] - end[1]) == 0.0:
            raise ValueError(f"segment {self.id}: zero length")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "id", int(self.id))

    @property
    def length(self) -> float:
        return math.hypot(self.start[0] - self.end[0], self.start[1] - self.end[1])

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.start) + np.asarray(self.end))

    def as_array(self) -> np.ndarray:
        return np.array([*self.start, *self.end])


class ErrorVector(NamedTuple):
    """Residual components of a candidate pair, in the order of ``TARGET``."""

    theta: float
    theta_epip: float
    rho: float
    mu: float

    def as_array(self) -> np.ndarray:
        return np.array(self)


def direction(seg: LineSegment2D) -> np.ndarray:
    """Unit vector pointing from ``end`` towards ``start``."""
    d = np.asarray(seg.start) - np.asarray(seg.end)
    return d / np.hypot(d[0], d[1])


def angle_between(a: LineSegment2D, b: LineSegment2D) -> float:
    da, db = direction(a), direction(b)
    cross = da[0] * db[1] - da[1] * db[0]
    return math.atan2(abs(cross), float(da @ db))


def length_ratio(a: LineSegment2D, b: LineSegment2D) -> float:
    la, lb = a.length, b.length
    return max(la, lb) / min(la, lb)


def overlap(a: LineSegment2D, b: LineSegment2D) -> float:
    """Common extent of both segments along the supporting line of ``a``.

    Endpoints of both segments are projected onto ``direction(a)``; the
    length of the intersection of the two scalar intervals is divided by
    the longer interval.
    """
    d = direction(a)
    pa = (float(np.dot(a.start, d)), float(np.dot(a.end, d)))
    pb = (float(np.dot(b.start, d)), float(np.dot(b.end, d)))
    return _interval_overlap(min(pa), max(pa), min(pb), max(pb))


def _interval_overlap(a0, a1, b0, b1):
    common = np.minimum(a1, b1) - np.maximum(a0, b0)
    longest = np.maximum(a1 - a0, b1 - b0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(longest > 0, common / np.where(longest > 0, longest, 1.0), 0.0)
    return np.clip(ratio, 0.0, 1.0) if np.ndim(ratio) else float(min(max(ratio, 0.0), 1.0))


def midpoint_flow(a: LineSegment2D, b: LineSegment2D) -> np.ndarray:
    return a.midpoint - b.midpoint


def flow_angle(flow, mode: MatchMode):
    """Deviation of ``flow`` from the mode's epipolar axis, in [0, pi/2].

    Stereo measures against the horizontal axis, frame-to-frame against the
    vertical one. A null flow has angle 0.
    """
    flow = np.asarray(flow, dtype=float)
    fx, fy = np.abs(flow[..., 0]), np.abs(flow[..., 1])
    if MatchMode.parse(mode) is MatchMode.STEREO:
        out = np.arctan2(fy, fx)
    else:
        out = np.arctan2(fx, fy)
    return float(out) if out.ndim == 0 else out


def epipolar_angle(a: LineSegment2D, b: LineSegment2D, mode: MatchMode) -> float:
    return flow_angle(midpoint_flow(a, b), mode)


def error_vector(a: LineSegment2D, b: LineSegment2D, mode: MatchMode) -> ErrorVector:
    return ErrorVector(
        angle_between(a, b),
        epipolar_angle(a, b, mode),
        overlap(a, b),
        length_ratio(a, b),
    )


def segments_to_array(segments: Sequence[LineSegment2D]) -> np.ndarray:
    """Stack segments as rows ``[sx, sy, ex, ey]``."""
    if not segments:
        return np.empty((0, 4))
    return np.array([(*s.start, *s.end) for s in segments], dtype=float)


def pairwise_error_vectors(refs: np.ndarray, cands: np.ndarray, mode: MatchMode) -> np.ndarray:
    """Error vectors for all pairs.

    ``refs`` is ``(m, 4)`` and ``cands`` is ``(n, 4)`` (rows as produced by
    :func:`segments_to_array`). Returns an ``(m, n, 4)`` array whose entry
    ``[i, j]`` equals ``error_vector(refs[i], cands[j], mode)``.
    """
    refs = np.asarray(refs, dtype=float).reshape(-1, 4)
    cands = np.asarray(cands, dtype=float).reshape(-1, 4)
    dr = refs[:, :2] - refs[:, 2:]
    dc = cands[:, :2] - cands[:, 2:]
    len_r = np.hypot(dr[:, 0], dr[:, 1])
    len_c = np.hypot(dc[:, 0], dc[:, 1])
    ur = dr / len_r[:, None]
    uc = dc / len_c[:, None]

    cross = ur[:, None, 0] * uc[None, :, 1] - ur[:, None, 1] * uc[None, :, 0]
    dot = ur @ uc.T
    theta = np.arctan2(np.abs(cross), dot)

    flow = 0.5 * (refs[:, None, :2] + refs[:, None, 2:]) - 0.5 * (cands[None, :, :2] + cands[None, :, 2:])
    theta_epip = flow_angle(flow, mode)

    # projections on each reference's own direction; the same elementwise
    # arithmetic for both sides keeps a self pair at exactly full overlap
    ux, uy = ur[:, 0], ur[:, 1]
    ra = ux * refs[:, 0] + uy * refs[:, 1]
    rb = ux * refs[:, 2] + uy * refs[:, 3]
    ca = ux[:, None] * cands[None, :, 0] + uy[:, None] * cands[None, :, 1]
    cb = ux[:, None] * cands[None, :, 2] + uy[:, None] * cands[None, :, 3]
    rho = _interval_overlap(
        np.minimum(ra, rb)[:, None], np.maximum(ra, rb)[:, None],
        np.minimum(ca, cb), np.maximum(ca, cb),
    )

    mu = np.maximum(len_r[:, None], len_c[None, :]) / np.minimum(len_r[:, None], len_c[None, :])
    return np.stack([theta, theta_epip, rho, mu], axis=-1)
