"""Ego-centric BEV ground truth, planar LiDAR and PNG rendering.

Grid convention: heading-up, the ego sits at cell ``(H // 2, W // 2)``; cell
``(r, c)`` is centered at ego-frame ``x = (H // 2 - r) * res`` (forward) and
``y = (W // 2 - c) * res`` (left). Moving forward decreases the row index.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from bevbench.config import SensorConfig
from bevbench.geometry import obb_corners, point_segment_distance, points_in_obb, ray_segment_distances
from bevbench.sim.types import AgentClass, LightState
from bevbench.sim.world import WorldState

CHANNELS = (
    "drivable",
    "route",
    "vehicles",
    "vulnerable",
    "static",
    "stop_line_state",
    "lidar_occupancy",
    "lidar_max_height",
)
CH = {name: i for i, name in enumerate(CHANNELS)}

STOP_LINE_LEVEL = {LightState.RED: 1.0, LightState.YELLOW: 0.5, LightState.GREEN: 0.25}

CLASS_CHANNEL = {
    AgentClass.VEHICLE: "vehicles",
    AgentClass.PEDESTRIAN: "vulnerable",
    AgentClass.CYCLIST: "vulnerable",
    AgentClass.STATIC: "static",
}


@dataclass
class BevGrid:
    data: np.ndarray  # (C, H, W) float32
    resolution: float = 0.5

    @property
    def height_cells(self) -> int:
        return self.data.shape[1]

    @property
    def width_cells(self) -> int:
        return self.data.shape[2]

    def channel(self, name: str) -> np.ndarray:
        return self.data[CH[name]]

    def __eq__(self, other):
        if not isinstance(other, BevGrid):
            return NotImplemented
        return (self.resolution == other.resolution and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))

    @classmethod
    def zeros(cls, cfg: SensorConfig) -> "BevGrid":
        return cls(np.zeros((len(CHANNELS), cfg.height_cells, cfg.width_cells), np.float32), cfg.resolution)


@dataclass
class LidarScan:
    points: np.ndarray  # (N, 4): x, y, z, intensity in the ego frame
    ray_count: int
    max_range: float

    def __len__(self):
        return len(self.points)


def cell_centers_ego(cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(cfg.height_cells)
    cols = np.arange(cfg.width_cells)
    x = (cfg.height_cells // 2 - rows) * cfg.resolution
    y = (cfg.width_cells // 2 - cols) * cfg.resolution
    return np.broadcast_to(x[:, None], (cfg.height_cells, cfg.width_cells)), \
        np.broadcast_to(y[None, :], (cfg.height_cells, cfg.width_cells))


def cell_centers_world(world: WorldState, cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    ex, ey = cell_centers_ego(cfg)
    p = world.ego.pose
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return p.x + c * ex - s * ey, p.y + s * ex + c * ey


def _grid_radius(cfg: SensorConfig) -> float:
    return math.hypot(cfg.height_cells, cfg.width_cells) * cfg.resolution / 2 + cfg.resolution


def _paint_polyline(plane, wx, wy, points, half_width, ego_xy, reach):
    ox, oy = ego_xy
    for a, b in zip(points[:-1], points[1:]):
        # skip segments that cannot touch the window
        if point_segment_distance(np.array(ox), np.array(oy), a, b) > reach + half_width:
            continue
        plane[point_segment_distance(wx, wy, a, b) <= half_width] = 1.0


def rasterize_bev(world: WorldState, cfg: SensorConfig | None = None, with_lidar: bool = True) -> BevGrid:
    """Paint lanes, the remaining route, agents and stop lines into a BevGrid.

    A cell is occupied by an object when its center lies inside (or on) the
    object's oriented box.
    """
    cfg = cfg or SensorConfig()
    grid = BevGrid.zeros(cfg)
    wx, wy = cell_centers_world(world, cfg)
    ego_xy = (world.ego.pose.x, world.ego.pose.y)
    reach = _grid_radius(cfg)

    drivable = grid.channel("drivable")
    for lane in world.network.lanes.values():
        _paint_polyline(drivable, wx, wy, lane.centerline.points, lane.width / 2, ego_xy, reach)

    route_plane = grid.channel("route")
    path = world.route.reference_path
    for span in world.route.spans:
        lo, hi = max(span.start, world.arc_position), span.end
        if hi <= lo:
            continue
        inner = [tuple(p) for p, s in zip(path.points, path.cum) if lo < s < hi]
        pts = np.array([path.point_at(lo), *inner, path.point_at(hi)])
        width = world.network.lanes[span.lane_id].width
        _paint_polyline(route_plane, wx, wy, pts, width / 2, ego_xy, reach)

    for agent in world.agents:
        plane = grid.channel(CLASS_CHANNEL[agent.cls])
        plane[points_in_obb(wx, wy, agent.pose, agent.half_extents)] = 1.0

    stop_plane = grid.channel("stop_line_state")
    for light in world.lights:
        level = STOP_LINE_LEVEL[light.state_at(world.sim_time)]
        a, b = light.stop_line
        mask = point_segment_distance(wx, wy, a, b) <= cfg.stop_line_half_width
        stop_plane[mask] = np.maximum(stop_plane[mask], level)

    if with_lidar:
        occ, height = lidar_to_bev(simulate_lidar(world, cfg), cfg)
        grid.data[CH["lidar_occupancy"]] = occ
        grid.data[CH["lidar_max_height"]] = height
    return grid


def class_height(cls: AgentClass, cfg: SensorConfig) -> float:
    if cls is AgentClass.VEHICLE:
        return cfg.vehicle_height
    if cls is AgentClass.STATIC:
        return cfg.static_height
    return cfg.pedestrian_height


def simulate_lidar(world: WorldState, cfg: SensorConfig | None = None) -> LidarScan:
    """Cast ``ray_count`` rays uniformly over 360 degrees from the ego origin.

    Each ray keeps its nearest hit on an agent box edge within ``max_range``;
    a hit becomes three points stacked at 1/3, 2/3 and 3/3 of the class height.
    """
    cfg = cfg or SensorConfig()
    if cfg.ray_count < 1:
        raise ValueError("ray_count must be >= 1")
    if not world.agents:
        return LidarScan(np.zeros((0, 4)), cfg.ray_count, cfg.max_range)
    p = world.ego.pose
    rel = 2.0 * math.pi * np.arange(cfg.ray_count) / cfg.ray_count
    dirs = np.stack([np.cos(p.yaw + rel), np.sin(p.yaw + rel)], axis=1)
    a_list, b_list, owner = [], [], []
    for k, agent in enumerate(world.agents):
        corners = obb_corners(agent.pose, agent.half_extents)
        for i in range(4):
            a_list.append(corners[i])
            b_list.append(corners[(i + 1) % 4])
            owner.append(k)
    dist = ray_segment_distances(p.x, p.y, dirs, np.array(a_list), np.array(b_list))
    best = np.argmin(dist, axis=1)
    rng = dist[np.arange(cfg.ray_count), best]
    hit = rng <= cfg.max_range
    points = []
    for i in np.flatnonzero(hit):
        r = float(rng[i])
        h = class_height(world.agents[owner[best[i]]].cls, cfg)
        lx, ly = r * math.cos(rel[i]), r * math.sin(rel[i])
        intensity = 1.0 - r / cfg.max_range
        for k in (1, 2, 3):
            points.append((lx, ly, h * k / 3, intensity))
    arr = np.array(points, dtype=float).reshape(-1, 4)
    return LidarScan(arr, cfg.ray_count, cfg.max_range)


def lidar_to_bev(scan: LidarScan, cfg: SensorConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Bin in-band points into (occupancy, max height) planes."""
    cfg = cfg or SensorConfig()
    H, W = cfg.height_cells, cfg.width_cells
    occ = np.zeros((H, W), np.float32)
    height = np.full((H, W), -np.inf)
    pts = scan.points
    if len(pts):
        keep = (pts[:, 2] >= cfg.z_min) & (pts[:, 2] <= cfg.z_max)
        pts = pts[keep]
        rows = np.floor(H // 2 - pts[:, 0] / cfg.resolution + 0.5).astype(int)
        cols = np.floor(W // 2 - pts[:, 1] / cfg.resolution + 0.5).astype(int)
        inside = (rows >= 0) & (rows < H) & (cols >= 0) & (cols < W)
        rows, cols, z = rows[inside], cols[inside], pts[inside, 2]
        occ[rows, cols] = 1.0
        np.maximum.at(height, (rows, cols), z)
    height[occ == 0] = 0.0
    return occ, height.astype(np.float32)


# Paint order: later entries draw over earlier ones.
PALETTE = (
    ("drivable", (70, 70, 70)),
    ("route", (40, 90, 160)),
    ("static", (150, 150, 150)),
    ("vehicles", (0, 200, 255)),
    ("vulnerable", (255, 60, 160)),
    ("lidar_occupancy", (255, 255, 255)),
)
BACKGROUND = (20, 20, 20)
STOP_LINE_COLORS = ((1.0, (230, 30, 30)), (0.5, (240, 200, 40)), (0.25, (40, 210, 80)))


def bev_to_rgb(grid: BevGrid) -> np.ndarray:
    img = np.empty((grid.height_cells, grid.width_cells, 3), np.uint8)
    img[:] = BACKGROUND
    for name, color in PALETTE[:3]:
        img[grid.channel(name) > 0.5] = color
    stop = grid.channel("stop_line_state")
    for level, color in STOP_LINE_COLORS:
        img[stop == np.float32(level)] = color
    for name, color in PALETTE[3:]:
        img[grid.channel(name) > 0.5] = color
    return img


def render_bev_png(grid: BevGrid, scale: int = 2) -> bytes:
    """Fixed color table; every cell becomes a ``scale`` x ``scale`` pixel block."""
    img = bev_to_rgb(grid)
    if scale > 1:
        img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    buf = io.BytesIO()
    Image.fromarray(img, "RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()
