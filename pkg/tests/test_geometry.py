import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bevbench.geometry import (
    Polyline,
    Pose2D,
    normalize_angle,
    obb_corners,
    obb_overlap,
    point_segment_distance,
    points_in_obb,
    ray_segment_distances,
    segments_intersect,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-20.0, 20.0, allow_nan=False)
extent = st.floats(0.1, 5.0)


def naive_overlap(ca, cb):
    """Independent SAT: axes from the edge normals of both corner lists."""
    for corners in (ca, cb):
        for i in range(4):
            x1, y1 = corners[i]
            x2, y2 = corners[(i + 1) % 4]
            nx, ny = -(y2 - y1), x2 - x1
            pa = [cx * nx + cy * ny for cx, cy in ca]
            pb = [cx * nx + cy * ny for cx, cy in cb]
            if max(pa) < min(pb) - 1e-9 or max(pb) < min(pa) - 1e-9:
                return False
    return True


@given(angles)
def test_normalize_angle_range_and_equivalence(a):
    n = normalize_angle(a)
    assert -math.pi < n <= math.pi
    assert math.isclose(math.cos(n), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(n), math.sin(a), abs_tol=1e-9)


def test_normalize_angle_boundary():
    assert normalize_angle(math.pi) == math.pi
    assert normalize_angle(-math.pi) == math.pi
    assert Pose2D(0, 0, 3 * math.pi).yaw == pytest.approx(math.pi)


@given(finite, finite, angles, finite, finite)
def test_pose_local_world_round_trip(x, y, yaw, px, py):
    pose = Pose2D(x, y, yaw)
    lx, ly = pose.to_local(px, py)
    wx, wy = pose.to_world(lx, ly)
    assert wx == pytest.approx(px, abs=1e-8)
    assert wy == pytest.approx(py, abs=1e-8)


def test_to_local_axes():
    pose = Pose2D(1.0, 1.0, math.pi / 2)
    assert pose.to_local(1.0, 3.0) == pytest.approx((2.0, 0.0))  # ahead
    assert pose.to_local(0.0, 1.0) == pytest.approx((0.0, 1.0))  # left


@settings(max_examples=300)
@given(finite.map(lambda v: v / 100), finite.map(lambda v: v / 100), angles, extent, extent,
       finite.map(lambda v: v / 100), finite.map(lambda v: v / 100), angles, extent, extent)
def test_obb_overlap_matches_naive_and_is_symmetric(x1, y1, a1, h1, w1, x2, y2, a2, h2, w2):
    pa, pb = Pose2D(x1, y1, a1), Pose2D(x2, y2, a2)
    got = obb_overlap(pa, (h1, w1), pb, (h2, w2))
    assert got == obb_overlap(pb, (h2, w2), pa, (h1, w1))
    ca, cb = obb_corners(pa, (h1, w1)).tolist(), obb_corners(pb, (h2, w2)).tolist()
    assert got == naive_overlap(ca, cb)


def test_obb_overlap_examples():
    ego = Pose2D(0, 0, 0)
    assert obb_overlap(ego, (2, 1), Pose2D(0.5, 0, 0), (0.4, 0.4))
    assert not obb_overlap(ego, (2, 1), Pose2D(10, 0, 0), (0.4, 0.4))
    assert obb_overlap(ego, (1, 1), Pose2D(2, 0, 0), (1, 1))  # touching counts
    # rotated box whose AABB overlaps but the box does not
    assert not obb_overlap(ego, (1, 1), Pose2D(2.3, 2.3, math.pi / 4), (1, 0.2))


@given(finite.map(lambda v: v / 10), finite.map(lambda v: v / 10), angles, extent, extent)
def test_points_in_obb_matches_corner_halfplanes(x, y, yaw, hx, hy):
    pose = Pose2D(x, y, yaw)
    rng = np.random.default_rng(0)
    px = x + rng.uniform(-6, 6, 500)
    py = y + rng.uniform(-6, 6, 500)
    got = points_in_obb(px, py, pose, (hx, hy))
    c = obb_corners(pose, (hx, hy))
    inside = np.ones(500, bool)
    margin = np.zeros(500)
    margin[:] = np.inf
    for i in range(4):
        a, b = c[i], c[(i + 1) % 4]
        cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        inside &= cross >= 0
        margin = np.minimum(margin, np.abs(cross))
    clear = margin > 1e-9
    assert np.array_equal(got[clear], inside[clear])


def test_segments_intersect_cases():
    assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))
    assert segments_intersect((0, 0), (1, 0), (1, 0), (2, 5))  # shared endpoint
    assert segments_intersect((0, 0), (2, 0), (1, 0), (3, 0))  # collinear overlap
    assert not segments_intersect((0, 0), (1, 0), (2, 0), (3, 0))


def test_ray_hits_wall_ahead():
    d = ray_segment_distances(0.0, 0.0, np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]),
                              np.array([[10.0, -5.0]]), np.array([[10.0, 5.0]]))
    assert d[0, 0] == pytest.approx(10.0, abs=1e-12)
    assert math.isinf(d[1, 0]) and math.isinf(d[2, 0])


def test_point_segment_distance():
    px = np.array([0.0, 5.0, 12.0])
    py = np.array([3.0, -2.0, 0.0])
    d = point_segment_distance(px, py, (0.0, 0.0), (10.0, 0.0))
    assert d.tolist() == pytest.approx([3.0, 2.0, 2.0])


def test_polyline_length_and_point_at():
    pl = Polyline([[0, 0], [3, 0], [3, 4]])
    assert pl.length == pytest.approx(7.0)
    assert pl.point_at(5.0) == pytest.approx((3.0, 2.0))
    assert pl.heading_at(5.0) == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        Polyline([[0, 0]])


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=12),
       st.floats(-60, 60), st.floats(-60, 60))
def test_project_matches_brute_force(points, x, y):
    pts = np.array(points)
    if np.any(np.hypot(*np.diff(pts, axis=0).T) < 1e-6):
        return
    pl = Polyline(pts)
    s, d = pl.project(x, y)
    best = min(point_segment_distance(np.array(x), np.array(y), a, b) for a, b in zip(pts[:-1], pts[1:]))
    assert d == pytest.approx(float(best), abs=1e-9)
    px, py = pl.point_at(s)
    assert math.hypot(px - x, py - y) == pytest.approx(d, abs=1e-9)


def test_project_window_restricts_search():
    # a U-turn: the point near the start is closest to the first leg, but the
    # window only allows the return leg
    pl = Polyline([[0, 0], [20, 0], [20, 2], [0, 2]])
    s_free, _ = pl.project(1.0, 0.5)
    s_win, d_win = pl.project(1.0, 0.5, 22.0, 42.0)
    assert s_free == pytest.approx(1.0)
    assert s_win == pytest.approx(22.0 + 19.0)
    assert d_win == pytest.approx(1.5)
