"""Value types of the simulated world."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from bevbench.geometry import Polyline, Pose2D

LANE_CHANGE_LENGTH = 20.0


class AgentClass(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    STATIC = "static"


class LightState(str, enum.Enum):
    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"


class InfractionKind(str, enum.Enum):
    COLLISION_PEDESTRIAN = "collision_pedestrian"
    COLLISION_VEHICLE = "collision_vehicle"
    COLLISION_STATIC = "collision_static"
    RED_LIGHT = "red_light"
    ROUTE_DEVIATION = "route_deviation"
    TIMEOUT = "timeout"


# CARLA Leaderboard 1.0 coefficients; terminal kinds carry 1.0 and end the episode.
PENALTIES = {
    InfractionKind.COLLISION_PEDESTRIAN: 0.50,
    InfractionKind.COLLISION_VEHICLE: 0.60,
    InfractionKind.COLLISION_STATIC: 0.65,
    InfractionKind.RED_LIGHT: 0.70,
    InfractionKind.ROUTE_DEVIATION: 1.0,
    InfractionKind.TIMEOUT: 1.0,
}

COLLISION_KIND = {
    AgentClass.PEDESTRIAN: InfractionKind.COLLISION_PEDESTRIAN,
    AgentClass.CYCLIST: InfractionKind.COLLISION_PEDESTRIAN,
    AgentClass.VEHICLE: InfractionKind.COLLISION_VEHICLE,
    AgentClass.STATIC: InfractionKind.COLLISION_STATIC,
}


@dataclass(frozen=True)
class Infraction:
    kind: InfractionKind
    frame: int
    penalty: float
    agent_id: str | None = None

    @classmethod
    def of(cls, kind: InfractionKind, frame: int, agent_id: str | None = None) -> "Infraction":
        return cls(kind=kind, frame=frame, penalty=PENALTIES[kind], agent_id=agent_id)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "frame": self.frame, "penalty": self.penalty}
        if self.agent_id is not None:
            d["agent_id"] = self.agent_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Infraction":
        return cls(InfractionKind(d["kind"]), int(d["frame"]), float(d["penalty"]), d.get("agent_id"))


@dataclass(frozen=True)
class EgoState:
    pose: Pose2D
    speed: float = 0.0
    steer_angle: float = 0.0
    wheelbase: float = 2.5
    half_extents: tuple[float, float] = (2.0, 1.0)


@dataclass(frozen=True)
class Keyframe:
    time: float
    pose: Pose2D


@dataclass(frozen=True)
class AgentState:
    """A scripted agent; keyframe times are seconds after ``spawn_time``."""

    id: str
    cls: AgentClass
    pose: Pose2D
    half_extents: tuple[float, float]
    speed: float = 0.0
    script: tuple[Keyframe, ...] = ()
    spawn_time: float = 0.0
    origin: Pose2D | None = None

    def __post_init__(self):
        if self.half_extents[0] <= 0 or self.half_extents[1] <= 0:
            raise ValueError(f"agent {self.id}: half_extents must be positive")
        times = [k.time for k in self.script]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"agent {self.id}: script times must be strictly increasing")
        if times and times[0] <= 0:
            raise ValueError(f"agent {self.id}: script times must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", self.pose)

    def at_time(self, sim_time: float) -> "AgentState":
        """Pose along the script: piecewise linear from the origin pose, hold after the end."""
        if not self.script:
            return self
        t = sim_time - self.spawn_time
        frames = ((0.0, self.origin),) + tuple((k.time, k.pose) for k in self.script)
        if t <= 0.0:
            return _replace_pose(self, self.origin, 0.0)
        for (t0, p0), (t1, p1) in zip(frames, frames[1:]):
            if t <= t1:
                f = (t - t0) / (t1 - t0)
                dyaw = math.remainder(p1.yaw - p0.yaw, 2.0 * math.pi)
                pose = Pose2D(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y), p0.yaw + f * dyaw)
                speed = math.hypot(p1.x - p0.x, p1.y - p0.y) / (t1 - t0)
                return _replace_pose(self, pose, speed)
        return _replace_pose(self, frames[-1][1], 0.0)


def _replace_pose(agent: AgentState, pose: Pose2D, speed: float) -> AgentState:
    return AgentState(agent.id, agent.cls, pose, agent.half_extents, speed, agent.script,
                      agent.spawn_time, agent.origin)


@dataclass(frozen=True)
class TrafficLight:
    """Fixed-cycle light; green, then yellow, then red."""

    id: str
    stop_line: tuple[tuple[float, float], tuple[float, float]]
    controlled_lane: str
    phase_durations: dict = field(default_factory=lambda: {"green": 10.0, "yellow": 3.0, "red": 10.0})
    phase_offset: float = 0.0

    def __post_init__(self):
        for k in ("green", "yellow", "red"):
            if self.phase_durations.get(k, 0.0) <= 0:
                raise ValueError(f"light {self.id}: phase duration {k} must be positive")

    def state_at(self, sim_time: float) -> LightState:
        g = self.phase_durations["green"]
        y = self.phase_durations["yellow"]
        r = self.phase_durations["red"]
        t = math.fmod(sim_time + self.phase_offset, g + y + r)
        if t < 0:
            t += g + y + r
        if t < g:
            return LightState.GREEN
        if t < g + y:
            return LightState.YELLOW
        return LightState.RED


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: Polyline
    width: float = 3.5
    successors: tuple[str, ...] = ()
    left_neighbor: str | None = None
    right_neighbor: str | None = None
    in_junction: bool = False


@dataclass(frozen=True)
class Junction:
    id: str
    incoming: tuple[str, ...]
    branches: dict  # {"left"|"right"|"straight": lane id}


@dataclass(frozen=True)
class RoadNetwork:
    lanes: dict
    junctions: tuple[Junction, ...] = ()

    def __post_init__(self):
        for lane in self.lanes.values():
            for ref in (*lane.successors, lane.left_neighbor, lane.right_neighbor):
                if ref is not None and ref not in self.lanes:
                    raise KeyError(f"lane {lane.id} references unknown lane {ref}")
        for j in self.junctions:
            for ref in (*j.incoming, *j.branches.values()):
                if ref not in self.lanes:
                    raise KeyError(f"junction {j.id} references unknown lane {ref}")

    def junction_for(self, incoming: str, branch_lane: str) -> tuple[Junction, str] | None:
        for j in self.junctions:
            if incoming in j.incoming:
                for name, lane_id in j.branches.items():
                    if lane_id == branch_lane:
                        return j, name
        return None

    def branches_from(self, lane_id: str) -> dict:
        """Branch name -> lane for every junction this lane feeds."""
        out = {}
        for j in self.junctions:
            if lane_id in j.incoming:
                out.update(j.branches)
        return out

    def match_lane(self, x: float, y: float) -> str | None:
        """Id of the lane whose centerline is nearest, if within its half width."""
        best, best_d = None, math.inf
        for lane in self.lanes.values():
            _, d = lane.centerline.project(x, y)
            if d < best_d - 1e-12:
                best, best_d = lane, d
        if best is None or best_d > best.width / 2:
            return None
        return best.id


@dataclass(frozen=True)
class LaneSpan:
    lane_id: str
    start: float
    end: float


@dataclass(frozen=True)
class Route:
    lane_sequence: tuple[str, ...]
    reference_path: Polyline
    spans: tuple[LaneSpan, ...]
    change_starts: tuple[float, ...] = ()
    command_annotations: tuple = ()

    @property
    def length(self) -> float:
        return self.reference_path.length

    def lane_at(self, s: float) -> str:
        for span in self.spans:
            if s < span.end:
                return span.lane_id
        return self.spans[-1].lane_id

    def span_of(self, index: int) -> LaneSpan:
        return self.spans[index]

    def transition_arc(self, index: int) -> float:
        """Route arc where the move from lane ``index-1`` to lane ``index`` begins."""
        return self.spans[index].start


def build_route(network: RoadNetwork, lane_sequence) -> Route:
    """Concatenate lane centerlines into the route's reference path.

    Successor transitions join end to start. A transition to a neighbor lane
    leaves the current lane at the middle of the change window and merges onto
    the neighbor ``LANE_CHANGE_LENGTH`` meters further on.
    """
    seq = tuple(lane_sequence)
    if not seq:
        raise ValueError("route lane_sequence is empty")
    for lid in seq:
        if lid not in network.lanes:
            raise KeyError(f"route references unknown lane {lid}")
    pts: list[tuple[float, float]] = []
    span_starts: list[float] = []
    change_starts: list[float] = []
    entry_s = 0.0  # arc along the current lane where the route joins it

    def path_len():
        total = 0.0
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            total += math.hypot(x1 - x0, y1 - y0)
        return total

    for i, lid in enumerate(seq):
        lane = network.lanes[lid]
        cl = lane.centerline
        nxt = seq[i + 1] if i + 1 < len(seq) else None
        is_change = nxt is not None and nxt in (lane.left_neighbor, lane.right_neighbor)
        if nxt is not None and not is_change and nxt not in lane.successors:
            raise ValueError(f"route: {nxt} is neither successor nor neighbor of {lid}")
        exit_s = cl.length
        if is_change:
            exit_s = max(entry_s, cl.length / 2 - LANE_CHANGE_LENGTH / 2)
        start_point = cl.point_at(entry_s)
        span_starts.append(path_len() if pts else 0.0)
        _append(pts, start_point)
        for k in range(len(cl.points)):
            if entry_s < cl.cum[k] < exit_s:
                _append(pts, (float(cl.points[k][0]), float(cl.points[k][1])))
        _append(pts, cl.point_at(exit_s))
        if is_change:
            change_starts.append(path_len())
            target = network.lanes[nxt].centerline
            entry_s = min(target.length, exit_s + LANE_CHANGE_LENGTH)
        else:
            entry_s = 0.0
    path = Polyline(pts)
    # a lane-change merge segment belongs to the target lane
    spans = tuple(
        LaneSpan(lid, span_starts[i], span_starts[i + 1] if i + 1 < len(seq) else path.length)
        for i, lid in enumerate(seq)
    )
    return Route(seq, path, spans, tuple(change_starts))


def _append(pts, p):
    if pts and math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1]) < 1e-9:
        return
    pts.append((float(p[0]), float(p[1])))
