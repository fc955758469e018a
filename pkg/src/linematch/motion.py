"""Frame-to-frame pose from matched line segments.

Each observation pairs a 3D segment expressed in the previous camera frame
with the homogeneous image line of its match in the current frame. Both
endpoints, moved by the pose and projected, should fall on that line; the
signed pixel distances are minimized by Gauss-Newton with left-multiplied
updates ``T <- exp(xi) T``. A first pass weights residuals with the
Pseudo-Huber IRLS weight; a second pass drops observations with large
residuals and refines with plain least squares.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .camera import StereoRig
from .geometry import LineSegment2D
from .se3 import PoseSE3, se3_exp
from .synth import Segment3D

MAX_HALVINGS = 8
COND_LIMIT = 1e12


class PointBehindCamera(ValueError):
    pass


class DegenerateGeometry(np.linalg.LinAlgError):
    pass


def line_from_segment(seg: LineSegment2D) -> np.ndarray:
    """Homogeneous line through the endpoints with ``l[0]**2 + l[1]**2 == 1``."""
    line = np.cross([*seg.start, 1.0], [*seg.end, 1.0])
    return line / np.hypot(line[0], line[1])


@dataclass(frozen=True, eq=False)
class LineObservation:
    segment3d: Segment3D
    observed_line: np.ndarray

    def __post_init__(self):
        line = np.array(self.observed_line, dtype=float).reshape(3)
        norm = np.hypot(line[0], line[1])
        if not (np.all(np.isfinite(line)) and norm > 0):
            raise ValueError("line coefficients must be finite with a nonzero normal")
        object.__setattr__(self, "observed_line", line / norm)

    @classmethod
    def from_segments(cls, segment3d: Segment3D, observed: LineSegment2D) -> "LineObservation":
        return cls(segment3d, line_from_segment(observed))


@dataclass(frozen=True)
class RobustConfig:
    delta: float = 1.0
    max_gn_iters: int = 20
    convergence_tol: float = 1e-8
    outlier_threshold: float = 2.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.max_gn_iters < 1:
            raise ValueError("max_gn_iters must be >= 1")


class MotionResult(NamedTuple):
    pose: PoseSE3
    inliers: np.ndarray
    stats: dict


def pseudo_huber_weight(r, delta: float):
    """IRLS weight ``1 / sqrt(1 + (r / delta)**2)`` of the Pseudo-Huber loss."""
    return 1.0 / np.sqrt(1.0 + (np.asarray(r, dtype=float) / delta) ** 2)


def pseudo_huber_loss(r, delta: float):
    return delta**2 * (np.sqrt(1.0 + (np.asarray(r, dtype=float) / delta) ** 2) - 1.0)


def point_to_line_residual(point, pose: PoseSE3, rig: StereoRig, line) -> float:
    """Signed pixel distance of the projected, transformed point to ``line``."""
    X = pose.apply(point)
    if X[2] <= 0:
        raise PointBehindCamera(f"point at depth {X[2]:.3g}")
    u, v = rig.project(X)
    return float(np.asarray(line) @ [u, v, 1.0])


def residuals_and_jacobian(points, lines, pose: PoseSE3, rig: StereoRig):
    """Residuals ``(N,)``, Jacobian ``(N, 6)`` w.r.t. a left perturbation, and a front mask.

    Rows for points at or behind the camera are zeroed and flagged False.
    """
    X = pose.apply(points)
    front = X[:, 2] > 0
    z = np.where(front, X[:, 2], 1.0)
    u = rig.fx * X[:, 0] / z + rig.cx
    v = rig.fy * X[:, 1] / z + rig.cy
    r = lines[:, 0] * u + lines[:, 1] * v + lines[:, 2]

    # d r / d X through the pinhole projection
    dr_dX = np.column_stack([
        lines[:, 0] * rig.fx / z,
        lines[:, 1] * rig.fy / z,
        -(lines[:, 0] * rig.fx * X[:, 0] + lines[:, 1] * rig.fy * X[:, 1]) / z**2,
    ])
    # exp(xi) X ~ X + xi_v + xi_w x X  =>  dX/dxi = [I, -[X]x]
    J = np.empty((len(X), 6))
    J[:, :3] = dr_dX
    J[:, 3:] = np.cross(X, dr_dX)
    r[~front] = 0.0
    J[~front] = 0.0
    return r, J, front


def _stack(observations: Sequence[LineObservation]):
    pts = np.array([[o.segment3d.p, o.segment3d.q] for o in observations]).reshape(-1, 3)
    lines = np.repeat(np.array([o.observed_line for o in observations]), 2, axis=0)
    return pts, lines


def _gauss_newton(points, lines, rig, pose, cfg: RobustConfig, robust: bool):
    def cost_of(p):
        r, _, front = residuals_and_jacobian(points, lines, p, rig)
        if not front.all():
            return np.inf
        return float(np.sum(pseudo_huber_loss(r, cfg.delta)) if robust else 0.5 * r @ r)

    cost = cost_of(pose)
    initial_cost = cost
    converged = False
    iters = 0
    for iters in range(1, cfg.max_gn_iters + 1):
        r, J, front = residuals_and_jacobian(points, lines, pose, rig)
        w = pseudo_huber_weight(r, cfg.delta) if robust else np.ones_like(r)
        w = w * front
        H = J.T @ (w[:, None] * J)
        g = J.T @ (w * r)
        if np.linalg.cond(H) > COND_LIMIT:
            raise DegenerateGeometry("normal equations are rank deficient")
        step = -np.linalg.solve(H, g)

        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = se3_exp(scale * step) @ pose
            trial_cost = cost_of(trial)
            if trial_cost <= cost:
                break
            scale *= 0.5
        else:
            converged = np.linalg.norm(step) < cfg.convergence_tol
            break
        pose, cost = trial, trial_cost
        if np.linalg.norm(scale * step) < cfg.convergence_tol:
            converged = True
            break
    return pose, {"iterations": iters, "converged": bool(converged),
                  "initial_cost": initial_cost, "final_cost": cost}


def estimate_motion(observations: Sequence[LineObservation], rig: StereoRig,
                    cfg: RobustConfig | None = None, init: PoseSE3 | None = None) -> MotionResult:
    """Two-pass robust Gauss-Newton over point-to-line reprojection errors.

    Returns the pose mapping previous-frame points into the current camera,
    a per-observation inlier mask and per-pass iteration statistics.
    Observations whose endpoints start behind the camera are dropped and
    counted in ``stats["behind_camera"]``.
    """
    cfg = cfg or RobustConfig()
    pose = init or PoseSE3.identity()
    observations = list(observations)
    n = len(observations)
    if n < 3:
        raise DegenerateGeometry(f"need at least 3 line observations, got {n}")

    pts, lines = _stack(observations)
    depth = pose.apply(pts)[:, 2].reshape(n, 2)
    usable = np.all(depth > 0, axis=1)
    behind = int((~usable).sum())
    if usable.sum() < 3:
        raise DegenerateGeometry("fewer than 3 observations in front of the camera")
    rows = np.repeat(usable, 2)

    pose1, pass1 = _gauss_newton(pts[rows], lines[rows], rig, pose, cfg, robust=True)

    r, _, front = residuals_and_jacobian(pts, lines, pose1, rig)
    per_obs = np.abs(r).reshape(n, 2).max(axis=1)
    inliers = usable & front.reshape(n, 2).all(axis=1) & (per_obs <= cfg.outlier_threshold)
    if inliers.sum() >= 3:
        keep = np.repeat(inliers, 2)
        pose2, pass2 = _gauss_newton(pts[keep], lines[keep], rig, pose1, cfg, robust=False)
    else:
        pose2, pass2 = pose1, {"iterations": 0, "converged": False, "skipped": True}
        inliers = usable.copy()

    stats = {
        "pass1": pass1,
        "pass2": pass2,
        "behind_camera": behind,
        # hitting max_gn_iters is reported here rather than raised
        "converged": bool(pass1["converged"] and pass2["converged"]),
    }
    return MotionResult(pose2, inliers, stats)


def triangulate_stereo_segment(left: LineSegment2D, right: LineSegment2D, rig: StereoRig) -> Segment3D:
    """3D segment in left-camera coordinates from a rectified stereo match.

    Each left endpoint is paired with the point of the right segment's line
    on the same image row. Raises ValueError for near-horizontal right lines
    or non-positive disparity.
    """
    a, b, c = line_from_segment(right)
    if abs(a) < 1e-6:
        raise ValueError("right segment is horizontal; disparity is undefined")
    pts = []
    for u, v in (left.start, left.end):
        disparity = u - (-(b * v + c) / a)
        if disparity <= 0:
            raise ValueError("non-positive disparity")
        z = rig.fx * rig.baseline / disparity
        pts.append(rig.backproject([u, v], z))
    return Segment3D(pts[0], pts[1], left.id)
