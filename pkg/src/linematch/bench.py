"""Timing of the matching stage on synthetic stereo pairs of a given size."""
from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from .geometry import LineSegment2D
from .matcher import MatchConfig, match_sets
from .synth import SceneConfig, synthesize


def stereo_pair(n: int, seed: int, noise: float = 0.5) -> tuple[list[LineSegment2D], list[LineSegment2D]]:
    """Exactly ``n`` left and ``n`` right segments of one synthetic scene.

    Truly corresponding segments are taken first (in left-id order); clutter
    tops up either side if the scene is too sparse.
    """
    count = max(2 * n, 8)
    for _ in range(8):
        views = synthesize(SceneConfig(segment_count=count, rng_seed=seed, endpoint_noise_sigma=noise))
        pairs = views.truth_pairs((0, "L"), (0, "R"))
        if len(pairs) >= n:
            break
        count *= 2
    left = {s.id: s for s in views.segments[(0, "L")]}
    right = {s.id: s for s in views.segments[(0, "R")]}
    chosen = sorted(pairs)[:n]
    return [left[i] for i in chosen], [right[pairs[i]] for i in chosen]


def time_matching(n: int, reps: int, cfg: MatchConfig | None = None, workers: int = 1) -> dict:
    """Median and 95th percentile wall time (ms) of ``match_sets`` over ``reps`` scenes."""
    cfg = cfg or MatchConfig()
    scenes = [stereo_pair(n, seed) for seed in range(reps)]
    if scenes:
        match_sets(*scenes[0], cfg, workers=workers)  # compile and warm caches
    times = []
    for s1, s2 in scenes:
        t0 = time.perf_counter()
        match_sets(s1, s2, cfg, workers=workers)
        times.append(1e3 * (time.perf_counter() - t0))
    t = np.asarray(times)
    return {
        "n": int(n),
        "reps": int(reps),
        "median_ms": float(np.median(t)) if t.size else float("nan"),
        "p95_ms": float(np.percentile(t, 95)) if t.size else float("nan"),
    }


def run_bench(sizes: Sequence[int], reps: int, workers: int = 1) -> list[dict]:
    return [time_matching(n, reps, workers=workers) for n in sizes]


def format_table(rows: list[dict]) -> str:
    header = ("n", "reps", "median_ms", "p95_ms")
    cells = [header] + [(str(r["n"]), str(r["reps"]), f"{r['median_ms']:.3f}", f"{r['p95_ms']:.3f}") for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells) + "\n"
