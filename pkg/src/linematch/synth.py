"""Synthetic 3D line scenes seen by a stereo rig over two frames.

The generator stands in for a line detector: it projects known 3D segments,
clips them at the image border, perturbs endpoints with pixel noise, drops
some at random and mixes in clutter. Every 2D segment that came from the
scene is tagged in a correspondence table, so matches can be scored against
exact ground truth.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .camera import Eye, StereoRig, clip_to_front, clip_to_rect
from .geometry import LineSegment2D
from .se3 import PoseSE3, se3_exp

FRAMES = (0, 1)
VIEWS = ("L", "R")
PRESETS = ("uniform", "repeated")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True, eq=False)
class Segment3D:
    p: np.ndarray
    q: np.ndarray
    id: int = 0

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(3)
        q = np.array(self.q, dtype=float).reshape(3)
        if not np.linalg.norm(p - q) > 0:
            raise ValueError(f"3D segment {self.id}: zero length")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "id", int(self.id))

    def transformed(self, pose: PoseSE3) -> "Segment3D":
        return Segment3D(pose.apply(self.p), pose.apply(self.q), self.id)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p - self.q))


@dataclass(frozen=True)
class SceneConfig:
    segment_count: int = 100
    depth_range: tuple[float, float] = (2.0, 10.0)
    length_range: tuple[float, float] = (0.5, 2.0)
    endpoint_noise_sigma: float = 0.5
    dropout_rate: float = 0.0
    clutter_count: int = 0
    rng_seed: int = 0
    preset: str = "uniform"
    repeat_count: int = 5
    repeat_spacing: float = 0.3
    min_pixel_length: float = 15.0
    max_translation: float = 0.05
    max_rotation_deg: float = 2.0
    rig: StereoRig = field(default_factory=StereoRig)

    def __post_init__(self):
        for name in ("depth_range", "length_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not 0 < lo <= hi or not math.isfinite(hi):
                raise ConfigError(name, f"need 0 < low <= high, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        if int(self.segment_count) < 0:
            raise ConfigError("segment_count", "must be >= 0")
        if int(self.clutter_count) < 0:
            raise ConfigError("clutter_count", "must be >= 0")
        if not self.endpoint_noise_sigma >= 0:
            raise ConfigError("endpoint_noise_sigma", "must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate", "must lie in [0, 1)")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed", "must be a 64-bit unsigned integer")
        if self.preset not in PRESETS:
            raise ConfigError("preset", f"must be one of {PRESETS}")
        if int(self.repeat_count) < 1:
            raise ConfigError("repeat_count", "must be >= 1")
        if not self.repeat_spacing > 0:
            raise ConfigError("repeat_spacing", "must be > 0")
        if not self.min_pixel_length > 0:
            raise ConfigError("min_pixel_length", "must be > 0")
        if not (self.max_translation >= 0 and self.max_rotation_deg >= 0):
            raise ConfigError("max_translation", "motion bounds must be >= 0")
        if isinstance(self.rig, dict):
            try:
                object.__setattr__(self, "rig", StereoRig.from_dict(self.rig))
            except (TypeError, ValueError) as exc:
                raise ConfigError("rig", str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["depth_range"] = list(self.depth_range)
        d["length_range"] = list(self.length_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None


@dataclass
class SyntheticViews:
    rig: StereoRig
    scene: list[Segment3D]
    poses: dict[int, PoseSE3]
    segments: dict[tuple[int, str], list[LineSegment2D]]
    truth: dict[tuple[int, str], dict[int, int]]

    def truth_pairs(self, key1, key2) -> dict[int, int]:
        """2D id in view ``key1`` -> 2D id in view ``key2`` of the same 3D segment."""
        inv = {s3: i2 for i2, s3 in self.truth[key2].items()}
        return {i1: inv[s3] for i1, s3 in self.truth[key1].items() if s3 in inv}


def _seed_streams(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(count)]


def _unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _frustum_points(rng, n, rig: StereoRig, depth_range):
    z0, z1 = depth_range
    # uniform in volume: density of depth grows with z^2
    z = np.cbrt(rng.uniform(z0**3, z1**3, n))
    uv = np.column_stack([rng.uniform(0, rig.width, n), rng.uniform(0, rig.height, n)])
    return rig.backproject(uv, z)


def generate_scene(cfg: SceneConfig, rng: Optional[np.random.Generator] = None) -> list[Segment3D]:
    """3D segments in the frame-0 left camera coordinates."""
    if rng is None:
        rng = _seed_streams(cfg.rng_seed, 6)[0]
    n = int(cfg.segment_count)
    if n == 0:
        return []
    if cfg.preset == "uniform":
        mids = _frustum_points(rng, n, cfg.rig, cfg.depth_range)
        dirs = _unit_vectors(rng, n)
        lengths = rng.uniform(*cfg.length_range, n)
    else:
        groups = -(-n // cfg.repeat_count)
        base = _frustum_points(rng, groups, cfg.rig, cfg.depth_range)
        gdirs = _unit_vectors(rng, groups)
        glen = rng.uniform(*cfg.length_range, groups)
        offs = _unit_vectors(rng, groups)
        offs -= np.einsum("ij,ij->i", offs, gdirs)[:, None] * gdirs
        offs /= np.linalg.norm(offs, axis=1, keepdims=True)
        k = np.arange(cfg.repeat_count)
        mids = (base[:, None, :] + cfg.repeat_spacing * k[None, :, None] * offs[:, None, :]).reshape(-1, 3)[:n]
        dirs = np.repeat(gdirs, cfg.repeat_count, axis=0)[:n]
        lengths = np.repeat(glen, cfg.repeat_count)[:n]
    half = 0.5 * lengths[:, None] * dirs
    return [Segment3D(m - h, m + h, i) for i, (m, h) in enumerate(zip(mids, half))]


def random_small_motion(rng, max_translation=0.05, max_rotation_deg=2.0) -> PoseSE3:
    """Random rigid motion with bounded translation norm and rotation angle."""
    t = _unit_vectors(rng, 1)[0] * rng.uniform(0, max_translation)
    w = _unit_vectors(rng, 1)[0] * math.radians(rng.uniform(0, max_rotation_deg))
    rot = se3_exp(np.concatenate([np.zeros(3), w]))
    return PoseSE3(rot.rotation, t)


def project_segment(seg: Segment3D, pose: PoseSE3, rig: StereoRig, eye: Eye) -> Optional[LineSegment2D]:
    """Image of ``seg`` (world coordinates) in one eye, clipped to the image.

    ``pose`` maps world points into the left camera. Returns None when the
    segment is behind the camera or entirely outside the image.
    """
    p, q = rig.to_eye(pose.apply(np.stack([seg.p, seg.q])), eye)
    front = clip_to_front(p, q)
    if front is None:
        return None
    a, b = rig.project(np.stack(front))
    clipped = clip_to_rect(a, b, rig.width, rig.height)
    if clipped is None:
        return None
    s, e = clipped
    if np.hypot(*(s - e)) == 0.0:
        return None
    return LineSegment2D(tuple(s), tuple(e), seg.id)


def _clutter(rng, count, rig: StereoRig, min_length):
    out = []
    while len(out) < count:
        mid = rng.uniform([0, 0], [rig.width, rig.height])
        ang = rng.uniform(0, 2 * math.pi)
        half = 0.5 * rng.uniform(min_length, max(min_length, 150.0)) * np.array([math.cos(ang), math.sin(ang)])
        clipped = clip_to_rect(mid - half, mid + half, rig.width, rig.height)
        if clipped is not None and np.hypot(*(clipped[0] - clipped[1])) >= min_length:
            out.append(clipped)
    return out


def render_views(scene: list[Segment3D], rig: StereoRig, pose_k: PoseSE3, pose_k1: PoseSE3,
                 cfg: SceneConfig, rngs=None) -> SyntheticViews:
    """Left/right images of both frames, with noise, dropout and clutter."""
    if rngs is None:
        rngs = _seed_streams(cfg.rng_seed, 6)[2:]
    poses = {0: pose_k, 1: pose_k1}
    segments, truth = {}, {}
    for (frame, view), rng in zip([(f, v) for f in FRAMES for v in VIEWS], rngs):
        eye = Eye(view)
        raw = []
        for seg in scene:
            img = project_segment(seg, poses[frame], rig, eye)
            if img is None or img.length < cfg.min_pixel_length:
                continue
            raw.append((np.array([*img.start, *img.end]), seg.id))
        keep = rng.uniform(size=len(raw)) >= cfg.dropout_rate
        raw = [r for r, k in zip(raw, keep) if k]
        if cfg.endpoint_noise_sigma > 0 and raw:
            noise = rng.normal(0.0, cfg.endpoint_noise_sigma, size=(len(raw), 4))
            raw = [(xy + dn, sid) for (xy, sid), dn in zip(raw, noise)]
        raw += [(np.concatenate(c), None) for c in _clutter(rng, cfg.clutter_count, rig, cfg.min_pixel_length)]
        order = rng.permutation(len(raw))
        segs, table = [], {}
        for new_id, k in enumerate(order):
            xy, sid = raw[k]
            segs.append(LineSegment2D((xy[0], xy[1]), (xy[2], xy[3]), new_id))
            if sid is not None:
                table[new_id] = sid
        segments[(frame, view)] = segs
        truth[(frame, view)] = table
    return SyntheticViews(rig, list(scene), poses, segments, truth)


def synthesize(cfg: SceneConfig) -> SyntheticViews:
    """Scene, frame-to-frame motion and all four views from one seed."""
    scene_rng, motion_rng, *view_rngs = _seed_streams(cfg.rng_seed, 6)
    scene = generate_scene(cfg, scene_rng)
    pose_k1 = random_small_motion(motion_rng, cfg.max_translation, cfg.max_rotation_deg)
    return render_views(scene, cfg.rig, PoseSE3.identity(), pose_k1, cfg, view_rngs)
