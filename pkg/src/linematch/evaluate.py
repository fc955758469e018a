"""Scoring matches against synthetic ground truth.

The endpoints of a reference segment are lifted onto its true 3D segment
(closest point to each viewing ray), carried into the candidate view with
the true pose and projected. The match is an inlier when both reprojected
endpoints lie closer than ``threshold`` pixels to the candidate's line.
Precision and recall use the generator's correspondence tables.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .camera import Eye, StereoRig
from .se3 import PoseSE3


class MissingGroundTruth(KeyError):
    pass


@dataclass
class EvalReport:
    match_count: int
    inlier_count: int
    inlier_ratio: float
    correct_count: int
    precision: float
    truth_pair_count: int
    recall: float
    rejections: dict = field(default_factory=dict)
    timing_ms: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.inlier_count <= self.match_count and 0 <= self.correct_count <= self.match_count):
            raise ValueError("inlier and correct counts must lie in [0, match_count]")
        for name in ("inlier_ratio", "precision", "recall"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den):
    return num / den if den else 0.0


def eye_pose(pose: PoseSE3, rig: StereoRig, eye: Eye) -> PoseSE3:
    """World-to-eye transform for one camera of the rig."""
    if Eye(eye) is Eye.LEFT:
        return pose
    return PoseSE3(pose.rotation, pose.translation - np.array([rig.baseline, 0.0, 0.0]))


def lift_to_segment(points2d, seg3d, pose: PoseSE3, rig: StereoRig, eye: Eye) -> np.ndarray:
    """Points on the 3D line of ``seg3d`` closest to the viewing rays of ``points2d``."""
    cam = eye_pose(pose, rig, eye)
    Rt = cam.rotation.T
    center = -Rt @ cam.translation
    uv = np.atleast_2d(np.asarray(points2d, dtype=float))
    rays = rig.backproject(uv, np.ones(len(uv))) @ cam.rotation
    D = seg3d.q - seg3d.p
    out = []
    for d in rays:
        M = np.column_stack([D, -d])
        (s, _), *_ = np.linalg.lstsq(M, center - seg3d.p, rcond=None)
        out.append(seg3d.p + s * D)
    return np.array(out)


def reproject_reference(ref, seg3d, key1, key2, poses, rig: StereoRig):
    """Image of the reference endpoints in view ``key2``, or None if behind it."""
    pts = lift_to_segment([ref.start, ref.end], seg3d, poses[key1[0]], rig, Eye(key1[1]))
    cam = eye_pose(poses[key2[0]], rig, Eye(key2[1])).apply(pts)
    if np.any(cam[:, 2] <= 0):
        return None
    return rig.project(cam)


def segment_line(segment) -> np.ndarray:
    """Homogeneous line through the segment's endpoints, scaled to a unit normal."""
    line = np.cross([*segment.start, 1.0], [*segment.end, 1.0])
    return line / np.hypot(line[0], line[1])


def projection_error(points, line) -> float:
    """Largest absolute distance of the points to ``line``."""
    pts = np.column_stack([np.asarray(points, dtype=float), np.ones(len(points))])
    return float(np.max(np.abs(pts @ line)))


def evaluate(matches: Iterable, segments1, segments2, key1, key2, *,
             scene: Mapping[int, object], poses: Mapping[int, PoseSE3], rig: StereoRig,
             truth: Mapping, threshold: float = 1.0, rejections: Optional[dict] = None,
             timing_ms: Optional[dict] = None) -> EvalReport:
    """Score ``(ref_id, cand_id)`` pairs matched from view ``key1`` to ``key2``.

    ``key`` values are ``(frame, view)`` tuples; ``scene`` maps 3D ids to
    objects with ``p`` and ``q`` world points; ``truth`` maps each view key
    to its ``{2d id: 3d id}`` table.
    """
    for key in (key1, key2):
        if key not in truth:
            raise MissingGroundTruth(f"no correspondence table for view {key}")
        if key[0] not in poses:
            raise MissingGroundTruth(f"no pose for frame {key[0]}")
    t1, t2 = truth[key1], truth[key2]
    ref_by_id = {s.id: s for s in segments1}
    cand_by_id = {s.id: s for s in segments2}

    pairs = [(m.ref_id, m.cand_id) if hasattr(m, "ref_id") else tuple(m) for m in matches]
    inliers = correct = 0
    for ref_id, cand_id in pairs:
        s3 = t1.get(ref_id)
        if s3 is None:
            continue
        if t2.get(cand_id) == s3:
            correct += 1
        moved = reproject_reference(ref_by_id[ref_id], scene[s3], key1, key2, poses, rig)
        if moved is not None and projection_error(moved, segment_line(cand_by_id[cand_id])) < threshold:
            inliers += 1

    inv2 = set(t2.values())
    ids1 = {s.id for s in segments1}
    truth_pairs = sum(1 for i, s3 in t1.items() if i in ids1 and s3 in inv2)
    n = len(pairs)
    return EvalReport(
        match_count=n,
        inlier_count=inliers,
        inlier_ratio=_ratio(inliers, n),
        correct_count=correct,
        precision=_ratio(correct, n),
        truth_pair_count=truth_pairs,
        recall=_ratio(correct, truth_pairs),
        rejections=dict(rejections or {}),
        timing_ms=dict(timing_ms or {}),
    )


def chance_precision(pairs, truth1: Mapping[int, int], truth2: Mapping[int, int]) -> float:
    """Expected precision after randomly permuting the candidate ids of ``pairs``.

    A reference is correct by chance only if its true partner is among the
    matched candidates, and then with probability ``1 / n``.
    """
    pairs = [(m.ref_id, m.cand_id) if hasattr(m, "ref_id") else tuple(m) for m in pairs]
    n = len(pairs)
    if n == 0:
        return 0.0
    cand_3d = {truth2[c] for _, c in pairs if c in truth2}
    hits = sum(1 for r, _ in pairs if truth1.get(r) in cand_3d)
    return hits / (n * n)


def evaluate_views(matches, views, key1, key2, threshold: float = 1.0, **kw) -> EvalReport:
    """:func:`evaluate` fed from a :class:`~linematch.synth.SyntheticViews`."""
    scene = {s.id: s for s in views.scene}
    return evaluate(matches, views.segments[key1], views.segments[key2], key1, key2,
                    scene=scene, poses=views.poses, rig=views.rig, truth=views.truth,
                    threshold=threshold, **kw)
