"""Planner contract (observation in, five waypoints + completion flag out),
the privileged oracle, and perturbation wrappers."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from bevbench.config import PlannerConfig, SimConfig
from bevbench.instructions import Instruction, Status, resolve_completion
from bevbench.sim.types import LightState
from bevbench.sim.world import WorldState, route_progress

N_WAYPOINTS = 5


class OffRouteError(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    bev_history: tuple = ()
    current_instruction: Instruction | None = None
    ego_speed: float = 0.0
    frame: int = 0

    def __post_init__(self):
        if len(self.bev_history) > 40:
            raise ValueError("bev_history holds at most 40 frames")


@dataclass(frozen=True)
class WaypointPlan:
    """Five ego-frame (x forward, y left) points at 0.5 s spacing."""

    waypoints: tuple[tuple[float, float], ...]
    completion_flag: bool = False

    def __post_init__(self):
        wps = tuple((float(x), float(y)) for x, y in self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        if len(wps) != N_WAYPOINTS:
            raise ValueError(f"a plan has exactly {N_WAYPOINTS} waypoints, got {len(wps)}")
        if not all(math.isfinite(v) for p in wps for v in p):
            raise ValueError("non-finite waypoint")

    def check_reach(self, max_speed: float = 20.0, spacing: float = 0.5) -> None:
        if math.hypot(*self.waypoints[0]) > 0.5 * max_speed * spacing:
            raise ValueError("first waypoint is out of reach of the ego")

    def as_array(self) -> np.ndarray:
        return np.array(self.waypoints)

    def mirrored(self) -> "WaypointPlan":
        return WaypointPlan(tuple((x, -y) for x, y in self.waypoints), self.completion_flag)


def straight_plan(speed: float, spacing: float = 0.5, flag: bool = False) -> WaypointPlan:
    return WaypointPlan(tuple((speed * spacing * (k + 1), 0.0) for k in range(N_WAYPOINTS)), flag)


class Planner(Protocol):
    """Non-privileged planners see only the Observation."""

    privileged: bool

    def plan(self, obs: Observation) -> WaypointPlan: ...


def call_planner(planner, obs: Observation, world: WorldState | None) -> WaypointPlan:
    if getattr(planner, "privileged", False):
        return planner.plan(obs, world)
    return planner.plan(obs)


class OraclePlanner:
    """Rule-based expert with world access.

    Waypoints are sampled along the route's reference path at the distances a
    speed profile reaches at each plan time. The profile accelerates toward
    ``cruise_speed`` and is capped by ``sqrt(2 * comfort_decel * d)`` where
    ``d`` is the distance to the nearest stop point (red stop line or leading
    obstacle). Misleading instructions never change the route.
    """

    privileged = True
    needs_bev = False

    def __init__(self, cfg: PlannerConfig | None = None, sim: SimConfig | None = None,
                 respect_lights: bool = True, respect_obstacles: bool = True):
        self.cfg = cfg or PlannerConfig()
        self.sim = sim or SimConfig()
        self.respect_lights = respect_lights
        self.respect_obstacles = respect_obstacles
        self._light_arcs: dict = {}

    def _stop_line_arc(self, world: WorldState, light) -> float | None:
        if light.id not in self._light_arcs:
            route = world.route
            arc = None
            if light.controlled_lane in route.lane_sequence:
                (ax, ay), (bx, by) = light.stop_line
                s, d = route.reference_path.project((ax + bx) / 2, (ay + by) / 2)
                if d < world.network.lanes[light.controlled_lane].width and route.lane_at(s - 1e-6) == light.controlled_lane:
                    arc = s
            self._light_arcs[light.id] = arc
        return self._light_arcs[light.id]

    def stop_arc(self, world: WorldState, s0: float, speed: float) -> float:
        """Arc position the ego center must not pass this tick."""
        cfg = self.cfg
        front = world.ego.wheelbase / 2
        stop = math.inf
        if self.respect_lights:
            for light in world.lights:
                arc = self._stop_line_arc(world, light)
                if arc is None or arc <= s0 + front:
                    continue
                state = light.state_at(world.sim_time)
                gap = arc - front - s0
                if state is LightState.RED or (state is LightState.YELLOW
                                               and speed * speed / (2 * cfg.comfort_decel) < gap):
                    stop = min(stop, arc - front - cfg.stop_margin)
        if self.respect_obstacles:
            path = world.route.reference_path
            horizon = cfg.cruise_speed * cfg.plan_spacing * cfg.n_waypoints + cfg.safety_gap + 20.0
            half_len = world.ego.half_extents[0]
            for agent in world.agents:
                s, d = path.project(agent.pose.x, agent.pose.y, s0 - half_len, s0 + horizon)
                reach = max(agent.half_extents)
                lane_half = world.network.lanes[world.route.lane_at(s)].width / 2
                if d > lane_half + reach or s < s0 - half_len:
                    continue
                stop = min(stop, s - reach - half_len - cfg.safety_gap)
        return stop

    def curve_caps(self, path, s0: float, step: float = 1.0):
        """Speed caps from path curvature ahead of ``s0``, already propagated
        backwards with the comfort deceleration. Returns (arcs, caps)."""
        cfg = self.cfg
        horizon = cfg.cruise_speed * cfg.plan_spacing * cfg.n_waypoints + cfg.cruise_speed ** 2 / (2 * cfg.comfort_decel)
        arcs = s0 + step * np.arange(int(math.ceil(horizon / step)) + 2)
        pts = np.array([path.point_at(s) for s in arcs])
        d = np.diff(pts, axis=0)
        heading = np.arctan2(d[:, 1], d[:, 0])
        turn = np.abs((np.diff(heading) + np.pi) % (2 * np.pi) - np.pi)
        kappa = np.concatenate([[0.0], turn / step, [0.0]])
        with np.errstate(divide="ignore"):
            caps = np.where(kappa > 1e-9, np.sqrt(cfg.lateral_accel / np.maximum(kappa, 1e-12)), np.inf)
        # a cap ahead also limits the speed before it (braking distance)
        for i in range(len(caps) - 2, -1, -1):
            caps[i] = min(caps[i], math.sqrt(caps[i + 1] ** 2 + 2 * cfg.comfort_decel * step))
        return arcs, caps

    def speed_profile(self, s0: float, v0: float, stop: float, substeps: int = 10,
                      curve: tuple | None = None) -> list[float]:
        """Arc positions at each plan time, integrating the capped profile."""
        cfg = self.cfg
        h = cfg.plan_spacing / substeps
        s, v = s0, v0
        out = []
        for _ in range(cfg.n_waypoints):
            for _ in range(substeps):
                cap = math.sqrt(2.0 * cfg.comfort_decel * max(0.0, stop - s)) if math.isfinite(stop) else math.inf
                if curve is not None:
                    arcs, caps = curve
                    cap = min(cap, float(np.interp(s, arcs, caps)))
                v_new = min(v + cfg.accel * h, cfg.cruise_speed, cap)
                v_new = max(v_new, 0.0)
                s = min(s + 0.5 * (v + v_new) * h, max(stop, s)) if math.isfinite(stop) else s + 0.5 * (v + v_new) * h
                v = v_new
            out.append(s)
        return out

    def completion_flag(self, instr: Instruction | None, world: WorldState, progress) -> bool:
        if instr is None:
            return False
        if instr.misleading:
            started = instr.activated_frame if instr.activated_frame is not None else instr.issue_frame
            return world.frame - started >= instr.timeout_frames
        return resolve_completion(instr, world, progress) is Status.COMPLETED

    def plan(self, obs: Observation, world: WorldState) -> WaypointPlan:
        progress = route_progress(world, self.sim.progress_window)
        lane_width = world.network.lanes[world.route.lane_at(progress.arc_position)].width
        if progress.lateral_offset >= lane_width:
            raise OffRouteError(f"ego is {progress.lateral_offset:.2f} m off the route")
        s0 = progress.arc_position
        speed = world.ego.speed
        stop = self.stop_arc(world, s0, speed)
        path = world.route.reference_path
        arcs = self.speed_profile(s0, speed, stop, curve=self.curve_caps(path, s0))
        pose = world.ego.pose
        wps = tuple(pose.to_local(*path.point_at(s)) for s in arcs)
        return WaypointPlan(wps, self.completion_flag(obs.current_instruction, world, progress))


def perturb_noise(plan: WaypointPlan, sigma: float, rng: np.random.Generator) -> WaypointPlan:
    """Add i.i.d. N(0, sigma^2) offsets to every waypoint coordinate."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return plan
    noise = rng.normal(0.0, sigma, size=(N_WAYPOINTS, 2))
    return WaypointPlan(tuple(map(tuple, plan.as_array() + noise)), plan.completion_flag)


class NoisyPlanner:
    """Per-frame noise seeded by (seed, frame), so plan() stays a pure function."""

    needs_bev = False

    def __init__(self, inner, sigma: float, seed: int = 0):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.inner = inner
        self.sigma = sigma
        self.seed = seed
        self.privileged = getattr(inner, "privileged", False)
        self.needs_bev = getattr(inner, "needs_bev", True)

    def plan(self, obs: Observation, world: WorldState | None = None) -> WaypointPlan:
        base = call_planner(self.inner, obs, world)
        rng = np.random.default_rng([self.seed, obs.frame])
        return perturb_noise(base, self.sigma, rng)


class LatencyPlanner:
    """Replays the inner plan from ``k`` frames ago; a straight-hold plan until then."""

    def __init__(self, inner, k: int):
        if k < 0:
            raise ValueError("latency must be >= 0 frames")
        self.inner = inner
        self.k = k
        self.privileged = getattr(inner, "privileged", False)
        self.needs_bev = getattr(inner, "needs_bev", True)
        self._queue: deque = deque(maxlen=k + 1)

    def plan(self, obs: Observation, world: WorldState | None = None) -> WaypointPlan:
        self._queue.append(call_planner(self.inner, obs, world))
        if len(self._queue) <= self.k:
            return straight_plan(obs.ego_speed)
        return self._queue[0]


def perturb_latency(planner, k_frames: int) -> LatencyPlanner:
    return LatencyPlanner(planner, k_frames)


@dataclass
class EchoPlanner:
    """Returns stored ground-truth waypoints by frame (open-loop sanity check)."""

    targets: dict = field(default_factory=dict)
    privileged: bool = False
    needs_bev: bool = False

    def plan(self, obs: Observation) -> WaypointPlan:
        return WaypointPlan(self.targets[obs.frame])


def parse_planner_spec(spec: str) -> list[tuple[str, float | None]]:
    """``oracle+noise:0.5+latency:3`` -> [("oracle", None), ("noise", 0.5), ("latency", 3)]."""
    parts = spec.strip().split("+")
    base = parts[0]
    if base not in ("oracle", "echo-gt"):
        raise ValueError(f"unknown planner {base!r}")
    out: list[tuple[str, float | None]] = [(base, None)]
    for part in parts[1:]:
        name, _, arg = part.partition(":")
        if name == "noise":
            value = float(arg)
            if value < 0:
                raise ValueError("noise sigma must be >= 0")
            out.append((name, value))
        elif name == "latency":
            value = int(arg)
            if value < 0:
                raise ValueError("latency must be >= 0")
            out.append((name, value))
        else:
            raise ValueError(f"unknown planner wrapper {name!r}")
    return out


def make_planner(spec: str, planner_cfg: PlannerConfig | None = None, sim_cfg: SimConfig | None = None,
                 seed: int = 0, echo_targets: dict | None = None, **oracle_kwargs):
    chain = parse_planner_spec(spec)
    base = chain[0][0]
    if base == "oracle":
        planner = OraclePlanner(planner_cfg, sim_cfg, **oracle_kwargs)
    else:
        if echo_targets is None:
            raise ValueError("echo-gt planner needs logged ground truth (replay only)")
        planner = EchoPlanner(echo_targets)
    for name, arg in chain[1:]:
        planner = NoisyPlanner(planner, arg, seed) if name == "noise" else LatencyPlanner(planner, int(arg))
    return planner

