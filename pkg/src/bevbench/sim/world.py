"""World state and the fixed-step simulation loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from bevbench.config import SimConfig
from bevbench.control import ControlSignal
from bevbench.geometry import Pose2D, obb_overlap, segments_intersect
from bevbench.sim.kinematics import ego_kinematics_step
from bevbench.sim.types import (
    COLLISION_KIND,
    AgentState,
    EgoState,
    Infraction,
    InfractionKind,
    LightState,
    RoadNetwork,
    Route,
    TrafficLight,
)


@dataclass(frozen=True)
class ScenarioTrigger:
    id: str
    trigger_position: float
    spawn: AgentState
    fired: bool = False


@dataclass(frozen=True)
class WorldState:
    sim_time: float
    frame: int
    ego: EgoState
    agents: tuple[AgentState, ...]
    lights: tuple[TrafficLight, ...]
    network: RoadNetwork
    route: Route
    triggers: tuple[ScenarioTrigger, ...] = ()
    rng_seed: int = 0
    arc_position: float = 0.0
    contacts: frozenset = field(default_factory=frozenset)
    dt: float = 0.1


class Progress(NamedTuple):
    arc_position: float
    completion_fraction: float
    lateral_offset: float


class Termination(NamedTuple):
    running: bool
    reason: str | None = None  # "success" | "route_deviation" | "timeout"


RUNNING = Termination(True, None)


def frame_time(frame: int, dt: float) -> float:
    """Simulation time of a frame, rounded so 10 Hz ticks are exact decimals."""
    return round(frame * dt, 9)


def initial_world(network: RoadNetwork, route: Route, lights=(), triggers=(), agents=(),
                  seed: int = 0, cfg: SimConfig | None = None) -> WorldState:
    """Ego at rest at the route start, heading along the reference path."""
    cfg = cfg or SimConfig()
    x, y = route.reference_path.point_at(0.0)
    ego = EgoState(Pose2D(x, y, route.reference_path.heading_at(0.0)), 0.0, 0.0,
                   cfg.wheelbase, tuple(cfg.ego_half_extents))
    return WorldState(0.0, 0, ego, tuple(a.at_time(0.0) for a in agents), tuple(lights), network,
                      route, tuple(triggers), seed, 0.0, frozenset(), cfg.dt)


def front_axle(ego: EgoState) -> tuple[float, float]:
    c, s = ego.pose.heading
    return ego.pose.x + c * ego.wheelbase / 2, ego.pose.y + s * ego.wheelbase / 2


def overlapping_agents(world: WorldState) -> list[str]:
    ego = world.ego
    return [a.id for a in world.agents
            if obb_overlap(ego.pose, ego.half_extents, a.pose, a.half_extents)]


def detect_collisions(world: WorldState, previous_contacts=frozenset()) -> list[Infraction]:
    """One infraction per agent newly in contact with the ego.

    An agent already in ``previous_contacts`` continues its contact interval
    and is not penalized again.
    """
    by_id = {a.id: a for a in world.agents}
    out = []
    for aid in overlapping_agents(world):
        if aid in previous_contacts:
            continue
        out.append(Infraction.of(COLLISION_KIND[by_id[aid].cls], world.frame, aid))
    return out


def check_red_light(world_prev: WorldState, world_next: WorldState) -> list[Infraction]:
    """Front-axle path crossing a red stop line of the lane the ego is on."""
    p0 = front_axle(world_prev.ego)
    p1 = front_axle(world_next.ego)
    if p0 == p1:
        return []
    route = world_next.route
    lanes = {route.lane_at(world_prev.arc_position), route.lane_at(world_next.arc_position)}
    out = []
    for light in world_next.lights:
        if light.controlled_lane not in lanes:
            continue
        if light.state_at(world_next.sim_time) is not LightState.RED:
            continue
        a, b = light.stop_line
        # Half-open crossing: a step that starts exactly on the line does not
        # count again, so landing on the line is penalized once.
        if _side(a, b, p0) != 0.0 and segments_intersect(p0, p1, a, b):
            out.append(Infraction.of(InfractionKind.RED_LIGHT, world_next.frame))
    return out


def _side(a, b, p) -> float:
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])


def route_progress(world: WorldState, window: float = 30.0) -> Progress:
    """Monotone projection of the ego onto the reference path.

    The search is restricted to ``[arc_position, arc_position + window]`` so
    progress never moves backwards and cannot jump to a later pass of a loop.
    """
    route = world.route
    s0 = world.arc_position
    s, _ = route.reference_path.project(world.ego.pose.x, world.ego.pose.y, s0, s0 + window)
    s = max(s, s0)
    px, py = route.reference_path.point_at(s)
    lateral = math.hypot(world.ego.pose.x - px, world.ego.pose.y - py)
    frac = min(1.0, s / route.length) if route.length > 0 else 1.0
    return Progress(s, frac, lateral)


def timeout_budget(route: Route, cfg: SimConfig) -> float:
    return route.length / cfg.expected_speed * cfg.timeout_slack


def check_termination(world: WorldState, progress: Progress, elapsed: float,
                      cfg: SimConfig | None = None) -> Termination:
    cfg = cfg or SimConfig()
    if progress.completion_fraction >= cfg.success_fraction:
        return Termination(False, "success")
    if progress.lateral_offset > cfg.deviation_threshold:
        return Termination(False, "route_deviation")
    if elapsed > timeout_budget(world.route, cfg):
        return Termination(False, "timeout")
    return RUNNING


def step_world(world: WorldState, control: ControlSignal, dt: float,
               cfg: SimConfig | None = None) -> tuple[WorldState, list[Infraction]]:
    """Advance the world by one fixed step and report this tick's infractions."""
    cfg = cfg or SimConfig()
    if dt != cfg.dt or dt != world.dt:
        raise ValueError(f"dt {dt} differs from the configured fixed step {cfg.dt}")
    for v in (control.steer, control.throttle, control.brake):
        if not math.isfinite(v):
            raise ValueError("non-finite control value")
    accel = control.throttle * cfg.max_accel - control.brake * cfg.max_decel
    # ControlSignal steers left with negative values; the bicycle model turns left with positive.
    ego = ego_kinematics_step(world.ego, -control.steer, accel, dt, cfg.max_steer, cfg.max_speed)
    frame = world.frame + 1
    t = frame_time(frame, dt)
    agents = tuple(a.at_time(t) for a in world.agents)
    nxt = replace(world, sim_time=t, frame=frame, ego=ego, agents=agents)
    prog = route_progress(nxt, cfg.progress_window)
    nxt = replace(nxt, arc_position=prog.arc_position)

    triggers = []
    spawned = list(agents)
    for trig in sorted(world.triggers, key=lambda tr: (tr.trigger_position, tr.id)):
        if not trig.fired and prog.arc_position >= trig.trigger_position:
            spawned.append(replace(trig.spawn, spawn_time=t).at_time(t))
            trig = replace(trig, fired=True)
        triggers.append(trig)
    nxt = replace(nxt, agents=tuple(spawned), triggers=tuple(triggers))

    infractions = detect_collisions(nxt, world.contacts)
    nxt = replace(nxt, contacts=frozenset(overlapping_agents(nxt)))
    infractions += check_red_light(world, nxt)
    return nxt, infractions
