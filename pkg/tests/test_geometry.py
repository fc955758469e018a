import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linematch.geometry import (TARGET, ErrorVector, LineSegment2D, MatchMode, angle_between, direction,
                                epipolar_angle, error_vector, flow_angle, length_ratio, midpoint_flow,
                                overlap, pairwise_error_vectors, segments_to_array)

S = MatchMode.STEREO
F = MatchMode.FRAME_TO_FRAME


def seg(x1, y1, x2, y2, i=0):
    return LineSegment2D((x1, y1), (x2, y2), i)


def random_segments(rng, n, scale=500.0):
    xy = rng.uniform(-scale, scale, size=(n, 4))
    bad = np.hypot(xy[:, 0] - xy[:, 2], xy[:, 1] - xy[:, 3]) < 1e-3
    xy[bad, 2] += 1.0
    return xy


def as_segments(rows):
    return [LineSegment2D(r[:2], r[2:], i) for i, r in enumerate(rows)]


class TestSegment:
    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            seg(1, 2, 1, 2)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            seg(0, 0, math.nan, 1)

    def test_orientation_kept(self):
        s = seg(3, 4, 0, 0)
        assert s.start == (3.0, 4.0) and s.end == (0.0, 0.0)
        assert s.length == 5.0

    def test_mode_parse(self):
        assert MatchMode.parse("stereo") is S
        assert MatchMode.parse("f2f") is F
        assert MatchMode.parse("frame_to_frame") is F
        with pytest.raises(ValueError):
            MatchMode.parse("mono")


@pytest.mark.parametrize("s, expected", [
    (seg(2, 0, 0, 0), (1.0, 0.0)),
    (seg(0, 0, 0, 3), (0.0, -1.0)),
    (seg(1, 1, 0, 0), (math.sqrt(2) / 2, math.sqrt(2) / 2)),
])
def test_direction_examples(s, expected):
    np.testing.assert_allclose(direction(s), expected, atol=1e-15)


def test_angle_examples():
    a = seg(0, 0, 1, 0)
    assert angle_between(a, a) == 0.0
    assert angle_between(seg(1, 0, 0, 0), seg(0, 1, 0, 0)) == pytest.approx(math.pi / 2, abs=1e-15)
    assert angle_between(seg(1, 0, 0, 0), seg(0, 0, 1, 0)) == pytest.approx(math.pi, abs=1e-15)


def test_length_ratio_examples():
    assert length_ratio(seg(0, 0, 5, 0), seg(0, 0, 0, 5)) == 1.0
    assert length_ratio(seg(0, 0, 2, 0), seg(0, 0, 4, 0)) == 2.0
    assert length_ratio(seg(0, 0, 1, 0), seg(0, 0, 10, 0)) == 10.0


def test_overlap_examples():
    a = seg(0, 0, 10, 0)
    assert overlap(a, a) == 1.0
    assert overlap(a, seg(20, 0, 30, 0)) == 0.0
    assert overlap(a, seg(5, 0, 15, 0)) == pytest.approx(0.5, abs=1e-15)


def test_overlap_uses_reference_line():
    # tilted candidate: its shadow on the reference covers the reference fully
    a, b = seg(0, 0, 10, 0), seg(0, 0, 10, 10)
    assert overlap(a, b) == pytest.approx(1.0)
    assert overlap(b, a) == pytest.approx(0.5)


def test_midpoint_flow_examples():
    a = seg(0, 0, 4, 2)
    np.testing.assert_array_equal(midpoint_flow(a, a), [0, 0])
    np.testing.assert_allclose(midpoint_flow(seg(8, 5, 12, 5), seg(2, 5, 6, 5)), [6, 0])
    np.testing.assert_allclose(midpoint_flow(seg(-1, 0, 1, 0), seg(-1, -2, 1, -2)), [0, 2])


def test_epipolar_examples():
    a = seg(0, 0, 2, 0)
    assert epipolar_angle(seg(6, 0, 8, 0), a, S) == 0.0
    assert epipolar_angle(seg(0, 3, 2, 3), a, S) == pytest.approx(math.pi / 2)
    assert epipolar_angle(a, a, F) == 0.0
    assert epipolar_angle(seg(0, 3, 2, 3), a, F) == 0.0
    assert epipolar_angle(seg(6, 0, 8, 0), a, F) == pytest.approx(math.pi / 2)


def test_flow_angle_matches_asin_form():
    rng = np.random.default_rng(3)
    flows = rng.normal(size=(1000, 2)) * 10
    norm = np.hypot(flows[:, 0], flows[:, 1])
    np.testing.assert_allclose(flow_angle(flows, S), np.arcsin(np.abs(flows[:, 1]) / norm), atol=1e-7)
    np.testing.assert_allclose(flow_angle(flows, F), np.arcsin(np.abs(flows[:, 0]) / norm), atol=1e-7)


def test_error_vector_examples():
    a = seg(0, 0, 10, 0)
    assert tuple(error_vector(a, a, S)) == tuple(TARGET)

    # perpendicular, equal length, common midpoint
    ev = error_vector(seg(-1, 0, 1, 0), seg(0, -1, 0, 1), S)
    assert ev.theta == pytest.approx(math.pi / 2)
    assert ev.theta_epip == 0.0
    assert ev.mu == 1.0

    ev = error_vector(a, seg(5, 1, 15, 1), S)
    assert isinstance(ev, ErrorVector)
    assert ev.theta == 0.0
    assert ev.rho == pytest.approx(0.5)
    assert ev.mu == pytest.approx(1.0)
    assert ev.theta_epip == pytest.approx(math.asin(1 / math.sqrt(26)), abs=1e-12)
    assert ev.theta_epip == pytest.approx(0.1974, abs=5e-5)


def test_pairwise_matches_scalar_functions():
    rng = np.random.default_rng(11)
    refs = as_segments(random_segments(rng, 30))
    cands = as_segments(random_segments(rng, 40))
    for mode in (S, F):
        E = pairwise_error_vectors(segments_to_array(refs), segments_to_array(cands), mode)
        assert E.shape == (30, 40, 4)
        for i in range(0, 30, 3):
            for j in range(0, 40, 7):
                np.testing.assert_allclose(E[i, j], error_vector(refs[i], cands[j], mode), rtol=1e-12, atol=1e-12)


def test_segments_to_array_empty():
    assert segments_to_array([]).shape == (0, 4)


finite = st.floats(-1e4, 1e4, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(finite, finite, finite, finite, finite, finite, st.floats(0.01, 100))
def test_overlap_translation_and_scale_invariance(x1, y1, x2, y2, dx, dy, k):
    if math.hypot(x1 - x2, y1 - y2) < 1e-2:
        return
    a = seg(x1, y1, x2, y2)
    b = seg(x1 + 0.3 * (x2 - x1) + 1, y1 + 0.3 * (y2 - y1), x2 + 1, y2 + 2)
    base = overlap(a, b)
    moved = overlap(seg(x1 + dx, y1 + dy, x2 + dx, y2 + dy), seg(b.start[0] + dx, b.start[1] + dy, b.end[0] + dx, b.end[1] + dy))
    scaled = overlap(seg(k * x1, k * y1, k * x2, k * y2), seg(*(k * np.array([*b.start, *b.end]))))
    assert moved == pytest.approx(base, abs=1e-6)
    assert scaled == pytest.approx(base, abs=1e-9)


def fuzz_geometry(n: int, seed: int = 0) -> dict:
    """Bound and symmetry checks on ``n`` random pairs; returns violation counts."""
    rng = np.random.default_rng(seed)
    A = random_segments(rng, n)
    B = random_segments(rng, n)
    # half of the second set is parallel or anti-parallel to the first
    par = rng.uniform(size=n) < 0.5
    d = A[:, :2] - A[:, 2:]
    scale = rng.uniform(0.2, 3.0, size=n) * rng.choice([-1.0, 1.0], size=n)
    off = rng.uniform(-100, 100, size=(n, 2))
    B[par, :2] = A[par, :2] + off[par]
    B[par, 2:] = B[par, :2] - scale[par, None] * d[par]

    out = {}
    for mode in (S, F):
        ab = _diag_errors(A, B, mode)
        ba = _diag_errors(B, A, mode)
        aa = _diag_errors(A, A, mode)
        out[f"{mode.value}_finite"] = int((~np.isfinite(ab)).sum())
        out[f"{mode.value}_bounds"] = int(
            ((ab[:, 0] < 0) | (ab[:, 0] > math.pi) | (ab[:, 1] < 0) | (ab[:, 1] > math.pi / 2)
             | (ab[:, 2] < 0) | (ab[:, 2] > 1) | (ab[:, 3] < 1)).sum())
        out[f"{mode.value}_symmetry"] = int(
            (np.abs(ab[:, [0, 1, 3]] - ba[:, [0, 1, 3]]) > 1e-12 * np.maximum(1, np.abs(ab[:, [0, 1, 3]]))).sum())
        out[f"{mode.value}_overlap_symmetry_parallel"] = int((np.abs(ab[par, 2] - ba[par, 2]) > 1e-9).sum())
        out[f"{mode.value}_self_is_target"] = int((aa != TARGET).any(axis=1).sum())
    norms = np.array([np.hypot(*direction(LineSegment2D(r[:2], r[2:]))) for r in A])
    out["direction_unit"] = int((np.abs(norms - 1) > 1e-12).sum())
    return out


def _diag_errors(A, B, mode, chunk=256):
    """error vectors of row-aligned pairs (A[i], B[i])."""
    out = np.empty((len(A), 4))
    for s in range(0, len(A), chunk):
        E = pairwise_error_vectors(A[s:s + chunk], B[s:s + chunk], mode)
        k = np.arange(E.shape[0])
        out[s:s + chunk] = E[k, k]
    return out


def test_fuzz_small():
    counts = fuzz_geometry(5000, seed=1)
    assert all(v == 0 for v in counts.values()), counts


def test_scalar_self_error_is_target():
    rng = np.random.default_rng(5)
    for row in random_segments(rng, 500):
        s = LineSegment2D(row[:2], row[2:])
        for mode in (S, F):
            assert error_vector(s, s, mode) == tuple(TARGET)
