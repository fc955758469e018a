"""One-to-many L1 matching of two segment sets.

For each reference segment the error vectors against all overlapping
candidates form the columns of a 4 x n matrix; a nonnegative lasso fit of
the target ``[0, 0, 1, 1]`` concentrates its weight on the candidate that
best satisfies the geometric constraints. Accepted matches then go through
a residual ratio test, a global one-to-one reduction and a robust filter on
the midpoint-flow direction.
"""
from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

from .geometry import (TARGET, LineSegment2D, MatchMode, flow_angle,
                       pairwise_error_vectors, segments_to_array)
from .sparse import NonConvergence, SolverConfig, _fit, _solve_homotopy_unchecked

REJECTION_STAGES = ("no_candidate", "ratio_test", "conflict", "epipolar_filter")

MAD_TO_SIGMA = 1.4826
MIN_SPREAD = 1e-6
MIN_FILTER_SIZE = 3


class EmptyProblem(ValueError):
    """Every candidate was excluded before solving."""


@dataclass(frozen=True)
class MatchConfig:
    mode: MatchMode = MatchMode.STEREO
    solver: SolverConfig = field(default_factory=SolverConfig)
    uniqueness_factor: float = 2.0
    sigma_multiplier: float = 2.0
    min_overlap: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", MatchMode.parse(self.mode))
        if not self.uniqueness_factor >= 1.0:
            raise ValueError("uniqueness_factor must be >= 1")
        if not self.sigma_multiplier > 0:
            raise ValueError("sigma_multiplier must be > 0")
        if not 0.0 <= self.min_overlap < 1.0:
            raise ValueError("min_overlap must lie in [0, 1)")


@dataclass(frozen=True)
class Match:
    ref_id: int
    cand_id: int
    residual: float
    weight: float


@dataclass
class MatchSet:
    matches: list[Match]
    mode: MatchMode
    stats: Counter = field(default_factory=Counter)

    def __len__(self):
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def rejection_counts(self) -> dict[str, int]:
        return {k: int(self.stats.get(k, 0)) for k in REJECTION_STAGES}


class Candidate(NamedTuple):
    index: int
    residual: float
    weight: float


def build_problem(ref: LineSegment2D, candidates: Sequence[LineSegment2D], mode: MatchMode,
                  min_overlap: float = 0.0):
    """Design matrix, target and column-to-candidate index map for ``ref``.

    Candidates whose overlap with ``ref`` is not above ``min_overlap`` (and
    always those with zero overlap) are left out.
    """
    errs = pairwise_error_vectors(ref.as_array()[None], segments_to_array(candidates),
                                  MatchMode.parse(mode))[0]
    keep = _usable(errs, min_overlap)
    if not keep.any():
        raise EmptyProblem(f"segment {ref.id}: no overlapping candidate")
    index_map = np.flatnonzero(keep)
    return errs[index_map].T.copy(), TARGET.copy(), index_map


def _usable(errs, min_overlap):
    rho = errs[:, 2]
    return (rho > 0.0) & (rho > min_overlap)


def select_candidate(A, b, cfg: MatchConfig, stats: Optional[Counter] = None) -> Optional[Candidate]:
    """Solve one lasso problem and apply the uniqueness test.

    Returns the accepted column or None. The rejection reason is counted in
    ``stats`` when given.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != b.shape[0] or not (np.isfinite(A).all() and np.isfinite(b).all()):
        raise ValueError("A must be a finite (len(b), n) matrix")
    return _select(A, b, cfg, stats)


_ACCEPT, _NO_CANDIDATE, _RATIO_TEST, _FALLBACK = 0, 1, 2, 3
_REASONS = {_NO_CANDIDATE: "no_candidate", _RATIO_TEST: "ratio_test"}


def _select(A, b, cfg, stats):
    solver = cfg.solver
    if solver.row_weights is not None:
        rw = np.asarray(solver.row_weights, dtype=float)
        W, target = np.ascontiguousarray(rw[:, None] * A), rw * b
    else:
        W, target = np.ascontiguousarray(A), b
    A = np.ascontiguousarray(A)
    n = A.shape[1]
    code, idx, residual, weight = _fit_and_pick(
        W, target, A, b, solver.lam, solver.iteration_budget(n), solver.tolerance, cfg.uniqueness_factor)
    if code == _FALLBACK:
        try:
            w = _solve_homotopy_unchecked(W, target, solver)
        except NonConvergence:
            code = _NO_CANDIDATE
        else:
            code, idx, residual, weight = _pick(A, b, w, cfg.uniqueness_factor)
    if code != _ACCEPT:
        if stats is not None:
            stats[_REASONS[code]] += 1
        return None
    return Candidate(int(idx), float(residual), float(weight))


@numba.njit(cache=True)
def _fit_and_pick(W, target, A, b, lam, budget, tol, factor):
    w, status = _fit(W, target, lam, budget, tol)
    if status != 0:
        return _FALLBACK, -1, 0.0, 0.0
    return _pick(A, b, w, factor)


@numba.njit(cache=True)
def _pick(A, b, w, factor):
    """Candidate with the largest normalized weight, if it passes the ratio test.

    Weight ties go to the lower residual, then to the lower column index.
    The pick must also be the lowest-residual live column, and the
    runner-up residual must be at least ``factor`` times its residual.
    """
    total = w.sum()
    if not total > 0.0:
        return _NO_CANDIDATE, -1, 0.0, 0.0
    best, best_w, best_r = -1, -1.0, np.inf
    r_min, r_second, live = np.inf, np.inf, 0
    for j in range(w.shape[0]):
        if w[j] <= 0.0:
            continue
        live += 1
        r = np.sqrt(np.sum((A[:, j] - b) ** 2))
        wj = w[j] / total
        if wj > best_w or (wj == best_w and r < best_r):
            best, best_w, best_r = j, wj, r
        if r < r_min:
            r_min, r_second = r, r_min
        elif r < r_second:
            r_second = r
    if live > 1 and (best_r > r_min or r_second < factor * r_min):
        return _RATIO_TEST, best, best_r, best_w
    return _ACCEPT, best, best_r, best_w


def match_one(ref: LineSegment2D, candidates: Sequence[LineSegment2D], cfg: MatchConfig,
              stats: Optional[Counter] = None) -> Optional[Candidate]:
    """Best candidate for ``ref`` as an index into ``candidates``, or None."""
    try:
        A, b, index_map = build_problem(ref, candidates, cfg.mode, cfg.min_overlap)
    except EmptyProblem:
        if stats is not None:
            stats["no_candidate"] += 1
        return None
    found = select_candidate(A, b, cfg, stats)
    if found is None:
        return None
    return found._replace(index=int(index_map[found.index]))


def _match_row(errs_row, cfg):
    stats = Counter()
    keep = np.flatnonzero(_usable(errs_row, cfg.min_overlap))
    if keep.size == 0:
        stats["no_candidate"] += 1
        return None, stats
    found = _select(errs_row[keep].T, TARGET, cfg, stats)
    if found is None:
        return None, stats
    return found._replace(index=int(keep[found.index])), stats


def default_workers() -> int:
    env = os.environ.get("LINEMATCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"LINEMATCH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def match_sets(set1: Sequence[LineSegment2D], set2: Sequence[LineSegment2D], cfg: MatchConfig,
               workers: int = 1, apply_filter: bool = True) -> MatchSet:
    """Match every segment of ``set1`` against ``set2``.

    Per-reference problems are independent and are spread over ``workers``
    threads; the one-to-one reduction and the epipolar filter run afterwards
    in reference order, so the result does not depend on scheduling.
    """
    set1, set2 = list(set1), list(set2)
    stats = Counter({k: 0 for k in REJECTION_STAGES})
    if not set1 or not set2:
        stats["no_candidate"] += len(set1)
        return MatchSet([], cfg.mode, stats)

    errs = pairwise_error_vectors(segments_to_array(set1), segments_to_array(set2), cfg.mode)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda row: _match_row(row, cfg), errs))
    else:
        outcomes = [_match_row(row, cfg) for row in errs]

    proposals = []
    for i, (found, row_stats) in enumerate(outcomes):
        stats.update(row_stats)
        if found is not None:
            proposals.append((found.residual, i, found))

    # keep the lowest residual per candidate; ties go to the earlier reference
    taken, kept = set(), []
    for residual, i, found in sorted(proposals, key=lambda p: (p[0], p[1])):
        if found.index in taken:
            stats["conflict"] += 1
            continue
        taken.add(found.index)
        kept.append((i, found))
    kept.sort(key=lambda p: p[0])
    matches = [Match(set1[i].id, set2[f.index].id, f.residual, f.weight) for i, f in kept]

    result = MatchSet(matches, cfg.mode, stats)
    if apply_filter:
        result = filter_epipolar(result, set1, set2, cfg)
    return result


def robust_stats(values) -> tuple[float, float]:
    """Median and MAD-based standard deviation (floored at 1e-6)."""
    values = np.asarray(values, dtype=float)
    center = float(np.median(values))
    spread = MAD_TO_SIGMA * float(np.median(np.abs(values - center)))
    return center, max(spread, MIN_SPREAD)


def match_flow_angles(matches: MatchSet, set1, set2) -> np.ndarray:
    by_id1 = {s.id: s for s in set1}
    by_id2 = {s.id: s for s in set2}
    flows = np.array([by_id1[m.ref_id].midpoint - by_id2[m.cand_id].midpoint for m in matches.matches])
    return flow_angle(flows.reshape(-1, 2), matches.mode)


def filter_epipolar(matches: MatchSet, set1, set2, cfg: MatchConfig) -> MatchSet:
    """Drop matches whose flow angle lies far from the bulk of all matches.

    Stereo flows are compared with the horizontal axis, frame-to-frame flows
    with the vertical one. Fewer than three matches pass through untouched.
    """
    if len(matches.matches) < MIN_FILTER_SIZE:
        return replace(matches, matches=list(matches.matches), stats=Counter(matches.stats))
    angles = match_flow_angles(matches, set1, set2)
    center, spread = robust_stats(angles)
    keep = np.abs(angles - center) <= cfg.sigma_multiplier * spread
    stats = Counter(matches.stats)
    stats["epipolar_filter"] += int((~keep).sum())
    kept = [m for m, k in zip(matches.matches, keep) if k]
    return MatchSet(kept, matches.mode, stats)
