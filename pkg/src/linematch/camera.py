"""Rectified pinhole stereo rig."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

NEAR_PLANE = 1e-3


class Eye(enum.Enum):
    LEFT = "L"
    RIGHT = "R"


@dataclass(frozen=True)
class StereoRig:
    """Two identical cameras; the right one sits ``baseline`` metres along +X."""

    fx: float = 450.0
    fy: float = 450.0
    cx: float = 376.0
    cy: float = 240.0
    baseline: float = 0.11
    width: int = 752
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not self.baseline > 0:
            raise ValueError("baseline must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StereoRig":
        return cls(**d)

    def to_eye(self, points_left, eye: Eye) -> np.ndarray:
        """Left-camera coordinates to the given eye's coordinates."""
        p = np.array(points_left, dtype=float)
        if Eye(eye) is Eye.RIGHT:
            p[..., 0] -= self.baseline
        return p

    def project(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        u = self.fx * p[..., 0] / p[..., 2] + self.cx
        v = self.fy * p[..., 1] / p[..., 2] + self.cy
        return np.stack([u, v], axis=-1)

    def backproject(self, uv, depth) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        z = np.asarray(depth, dtype=float)
        x = (uv[..., 0] - self.cx) * z / self.fx
        y = (uv[..., 1] - self.cy) * z / self.fy
        return np.stack([x, y, z * np.ones_like(x)], axis=-1)


def clip_to_front(p, q, near=NEAR_PLANE):
    """Portion of the 3D segment with ``z >= near``, or None."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p[2] < near and q[2] < near:
        return None
    if p[2] >= near and q[2] >= near:
        return p, q
    s = (near - p[2]) / (q[2] - p[2])
    cut = p + s * (q - p)
    return (cut, q) if p[2] < near else (p, cut)


def clip_to_rect(a, b, width, height):
    """Liang-Barsky clip of the 2D segment ``a-b`` to ``[0, width] x [0, height]``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = b - a
    t0, t1 = 0.0, 1.0
    edge0 = edge1 = None
    borders = ((0, 0.0), (0, float(width)), (1, 0.0), (1, float(height)))
    for edge, (p, q) in enumerate(((-d[0], a[0]), (d[0], width - a[0]), (-d[1], a[1]), (d[1], height - a[1]))):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return None
            if r > t0:
                t0, edge0 = r, edge
        else:
            if r < t0:
                return None
            if r < t1:
                t1, edge1 = r, edge
    if t1 <= t0:
        return None

    def cut(t, edge):
        pt = a + t * d
        # land exactly on the border that was hit
        axis, value = borders[edge]
        pt[axis] = value
        return pt

    return (a if edge0 is None else cut(t0, edge0)), (b if edge1 is None else cut(t1, edge1))
