"""Planar geometry kernels: angles, oriented boxes, polylines, segment tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def heading(self) -> tuple[float, float]:
        return math.cos(self.yaw), math.sin(self.yaw)

    def to_local(self, x: float, y: float) -> tuple[float, float]:
        """World point -> this pose's frame (x forward, y left)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = x - self.x, y - self.y
        return c * dx + s * dy, -s * dx + c * dy

    def to_world(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return self.x + c * x - s * y, self.y + s * x + c * y


def obb_corners(pose: Pose2D, half_extents) -> np.ndarray:
    """Corners of an oriented box, counterclockwise, shape (4, 2)."""
    hx, hy = half_extents
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    local = ((hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy))
    return np.array([(pose.x + c * lx - s * ly, pose.y + s * lx + c * ly) for lx, ly in local])


def obb_overlap(pose_a: Pose2D, ext_a, pose_b: Pose2D, ext_b) -> bool:
    """Separating-axis test for two oriented boxes (touching counts as overlap)."""
    ca = obb_corners(pose_a, ext_a)
    cb = obb_corners(pose_b, ext_b)
    axes = (
        (math.cos(pose_a.yaw), math.sin(pose_a.yaw)),
        (-math.sin(pose_a.yaw), math.cos(pose_a.yaw)),
        (math.cos(pose_b.yaw), math.sin(pose_b.yaw)),
        (-math.sin(pose_b.yaw), math.cos(pose_b.yaw)),
    )
    for ax in axes:
        axis = np.array(ax)
        pa = ca @ axis
        pb = cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def points_in_obb(px: np.ndarray, py: np.ndarray, pose: Pose2D, half_extents) -> np.ndarray:
    """Vectorized point-in-box test: transform points into the box frame."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dx = px - pose.x
    dy = py - pose.y
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= half_extents[0]) & (np.abs(v) <= half_extents[1])


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection using orientation tests."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def ray_segment_distances(ox, oy, dirs: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance along each ray to each segment, inf where they miss.

    ``dirs`` is (R, 2) unit directions, ``a``/``b`` are (S, 2) endpoints.
    Returns an (R, S) array.
    """
    e = b - a  # (S, 2)
    w = a - np.array([ox, oy])  # (S, 2)
    dx = dirs[:, 0:1]
    dy = dirs[:, 1:2]
    denom = dx * e[None, :, 1] - dy * e[None, :, 0]  # cross(d, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / denom
        u = (w[None, :, 0] * dy - w[None, :, 1] * dx) / denom
    hit = (denom != 0) & (t >= 0) & (u >= 0) & (u <= 1)
    return np.where(hit, t, np.inf)


def point_segment_distance(px: np.ndarray, py: np.ndarray, a, b) -> np.ndarray:
    ax, ay = a
    ex, ey = b[0] - ax, b[1] - ay
    ll = ex * ex + ey * ey
    if ll == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / ll, 0.0, 1.0)
    return np.hypot(px - (ax + t * ex), py - (ay + t * ey))


class Polyline:
    """A 2D polyline with cumulative arc length and windowed projection."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least 2 points of shape (N, 2)")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate(([0.0], np.cumsum(self.seg_len)))
        self.length = float(self.cum[-1])

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return bool(np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"Polyline({len(self.points)} points, length={self.length:.3f})"

    def _segment_at(self, s: float) -> int:
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        return min(max(i, 0), len(self.seg_len) - 1)

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length ``s``; extrapolates linearly beyond both ends."""
        i = self._segment_at(s)
        a = self.points[i]
        d = self.points[i + 1] - a
        L = self.seg_len[i]
        t = (s - self.cum[i]) / L if L > 0 else 0.0
        return float(a[0] + t * d[0]), float(a[1] + t * d[1])

    def heading_at(self, s: float) -> float:
        i = self._segment_at(s)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])

    def project(self, x: float, y: float, s_min: float = 0.0, s_max: float | None = None):
        """Nearest point on the sub-path [s_min, s_max]; returns (s, distance)."""
        if s_max is None:
            s_max = self.length
        s_min = max(0.0, min(s_min, self.length))
        s_max = max(s_min, min(s_max, self.length))
        lo = self._segment_at(s_min)
        hi = self._segment_at(s_max)
        a = self.points[lo:hi + 1]
        e = self.points[lo + 1:hi + 2] - a
        ll = self.seg_len[lo:hi + 1] ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(ll > 0, ((x - a[:, 0]) * e[:, 0] + (y - a[:, 1]) * e[:, 1]) / ll, 0.0)
        s = self.cum[lo:hi + 1] + np.clip(t, 0.0, 1.0) * self.seg_len[lo:hi + 1]
        # clipping to the window keeps each candidate inside its own segment
        s = np.clip(s, s_min, s_max)
        L = self.seg_len[lo:hi + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(L > 0, (s - self.cum[lo:hi + 1]) / L, 0.0)
        px = a[:, 0] + f * e[:, 0]
        py = a[:, 1] + f * e[:, 1]
        d = np.hypot(px - x, py - y)
        k = int(np.argmin(d))
        return float(s[k]), float(d[k])

    def distance(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Unwindowed distance from many points to the polyline."""
        out = np.full(np.shape(px), np.inf)
        for i in range(len(self.seg_len)):
            out = np.minimum(out, point_segment_distance(px, py, self.points[i], self.points[i + 1]))
        return out
