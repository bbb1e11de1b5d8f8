"""Route files, 10 Hz episode logs (JSON Lines), BEV dumps and open-loop replay."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from bevbench.geometry import Polyline, Pose2D
from bevbench.instructions import commands_from_route
from bevbench.planner import call_planner
from bevbench.scoring import DisplacementResult, RouteScore, displacement_errors, mean_displacement
from bevbench.sensors import CHANNELS, BevGrid
from bevbench.sim.types import (
    AgentClass,
    AgentState,
    Infraction,
    Junction,
    Keyframe,
    Lane,
    RoadNetwork,
    Route,
    TrafficLight,
    build_route,
)
from bevbench.sim.world import ScenarioTrigger

BEV_MAGIC = b"BEVG"


class RouteFileError(ValueError):
    pass


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RouteInputs:
    route_id: str
    town_id: str
    network: RoadNetwork
    route: Route
    lights: tuple[TrafficLight, ...] = ()
    triggers: tuple[ScenarioTrigger, ...] = ()
    agents: tuple[AgentState, ...] = ()
    scenario_seed: int = 0
    source: str | None = None


@lru_cache(maxsize=1)
def route_schema() -> dict:
    return json.loads(resources.files("bevbench").joinpath("data/route.schema.json").read_text("utf-8"))


def _pose(d) -> Pose2D:
    return Pose2D(float(d["x"]), float(d["y"]), float(d.get("yaw", 0.0)))


def _agent(d) -> AgentState:
    script = tuple(Keyframe(float(k["t"]), _pose(k["pose"])) for k in d.get("script", ()))
    try:
        return AgentState(d["id"], AgentClass(d["class"]), _pose(d["pose"]),
                          (float(d["half_extents"][0]), float(d["half_extents"][1])), 0.0, script)
    except ValueError as exc:
        raise RouteFileError(str(exc)) from None


def load_route_file(data: bytes | str, route_id: str | None = None) -> RouteInputs:
    """Validate a route JSON document and build the world inputs."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise RouteFileError(f"malformed JSON: {exc}") from None
    validator = jsonschema.Draft202012Validator(route_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        raise RouteFileError(f"schema violation at {error.json_path}: {error.message}")

    lane_ids = [ln["id"] for ln in doc["lanes"]]
    if len(set(lane_ids)) != len(lane_ids):
        raise RouteFileError("duplicate lane id")

    def ref(lane_id, where):
        if lane_id is not None and lane_id not in lane_ids:
            raise RouteFileError(f"dangling reference to lane {lane_id!r} in {where}")

    for ln in doc["lanes"]:
        for s in ln.get("successors", []):
            ref(s, f"lane {ln['id']} successors")
        ref(ln.get("left_neighbor"), f"lane {ln['id']} left_neighbor")
        ref(ln.get("right_neighbor"), f"lane {ln['id']} right_neighbor")
    for j in doc.get("junctions", []):
        for s in j["incoming"]:
            ref(s, f"junction {j['id']} incoming")
        for name, s in j["branches"].items():
            ref(s, f"junction {j['id']} branch {name}")
    for lt in doc.get("lights", []):
        ref(lt["controlled_lane"], f"light {lt['id']}")
    for s in doc["route"]["lane_sequence"]:
        ref(s, "route lane_sequence")

    lanes = {}
    for ln in doc["lanes"]:
        lanes[ln["id"]] = Lane(
            ln["id"], Polyline(ln["centerline"]), float(ln.get("width", 3.5)),
            tuple(ln.get("successors", [])), ln.get("left_neighbor"), ln.get("right_neighbor"),
            bool(ln.get("in_junction", False)),
        )
    junctions = tuple(Junction(j["id"], tuple(j["incoming"]), dict(j["branches"]))
                      for j in doc.get("junctions", []))
    network = RoadNetwork(lanes, junctions)
    try:
        route = build_route(network, doc["route"]["lane_sequence"])
    except (KeyError, ValueError) as exc:
        raise RouteFileError(f"route: {exc}") from None
    route = replace(route, command_annotations=tuple(commands_from_route(route, network)))
    lights = tuple(
        TrafficLight(lt["id"], tuple(tuple(map(float, p)) for p in lt["stop_line"]), lt["controlled_lane"],
                     dict(lt.get("phase_durations", {"green": 10.0, "yellow": 3.0, "red": 10.0})),
                     float(lt.get("phase_offset", 0.0)))
        for lt in doc.get("lights", [])
    )
    agents = tuple(_agent(a) for a in doc.get("agents", []))
    triggers = tuple(ScenarioTrigger(t["id"], float(t["trigger_position"]), _agent(t["spawn"]))
                     for t in doc.get("triggers", []))
    ids = [a.id for a in agents] + [t.spawn.id for t in triggers]
    if len(set(ids)) != len(ids):
        raise RouteFileError("duplicate agent id")
    rid = doc.get("route_id") or route_id or "route"
    return RouteInputs(rid, doc["town_id"], network, route, lights, triggers, agents,
                       int(doc.get("scenario_seed", 0)))


def load_route_path(path: str | Path) -> RouteInputs:
    path = Path(path)
    inputs = load_route_file(path.read_bytes(), route_id=path.stem)
    return replace(inputs, source=str(path))


# --- episode logs -----------------------------------------------------------

@dataclass(frozen=True)
class FrameRecord:
    frame: int
    sim_time: float
    ego: dict  # x, y, yaw, speed, steer_angle
    control: dict  # steer, throttle, brake
    instruction: dict | None = None  # id, command, text, misleading
    plan: tuple = ()
    completion_flag: bool = False
    gt_waypoints: tuple = ()
    gt_padded: bool = False
    affordances: dict = field(default_factory=dict)
    progress: dict = field(default_factory=dict)
    infractions: tuple[Infraction, ...] = ()

    def to_dict(self) -> dict:
        return {
            "frame": self.frame, "sim_time": self.sim_time, "ego": self.ego, "control": self.control,
            "instruction": self.instruction, "plan": [list(p) for p in self.plan],
            "completion_flag": self.completion_flag,
            "gt_waypoints": [list(p) for p in self.gt_waypoints], "gt_padded": self.gt_padded,
            "affordances": self.affordances, "progress": self.progress,
            "infractions": [i.to_dict() for i in self.infractions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        return cls(
            int(d["frame"]), d["sim_time"], d["ego"], d["control"], d["instruction"],
            tuple(tuple(p) for p in d["plan"]), d["completion_flag"],
            tuple(tuple(p) for p in d["gt_waypoints"]), d["gt_padded"], d["affordances"], d["progress"],
            tuple(Infraction.from_dict(i) for i in d["infractions"]),
        )

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.ego["x"], self.ego["y"], self.ego["yaw"])


@dataclass
class EpisodeLog:
    header: dict
    records: list = field(default_factory=list)
    result: RouteScore | None = None


def append_frame(log: EpisodeLog, record: FrameRecord) -> None:
    if log.records and record.frame != log.records[-1].frame + 1:
        raise LogFormatError(f"frame gap: {log.records[-1].frame} -> {record.frame}")
    if not log.records and record.frame != 0:
        raise LogFormatError("a log starts at frame 0")
    log.records.append(record)


def _line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_log(log: EpisodeLog) -> bytes:
    head = {"type": "header", "header": log.header,
            "result": log.result.to_dict() if log.result is not None else None}
    lines = [_line(head)] + [_line(r.to_dict()) for r in log.records]
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_log(data: bytes) -> EpisodeLog:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise LogFormatError("empty log")
    head = json.loads(lines[0])
    if head.get("type") != "header":
        raise LogFormatError("first line is not a header")
    result = RouteScore.from_dict(head["result"]) if head.get("result") is not None else None
    log = EpisodeLog(head["header"], [], result)
    for line in lines[1:]:
        append_frame(log, FrameRecord.from_dict(json.loads(line)))
    return log


def future_poses_local(records, f: int, offsets) -> list[tuple[float, float]] | None:
    """Poses of frames ``f + o`` expressed in the ego frame at ``f``; None past the end."""
    base = records[f].pose
    out = []
    for o in offsets:
        if f + o >= len(records):
            return None
        p = records[f + o].pose
        out.append(base.to_local(p.x, p.y))
    return out


def fill_ground_truth(records: list, horizon: int = 5) -> list:
    """Attach next-``horizon`` ego positions; the tail is padded with the last pose."""
    n = len(records)
    out = []
    for f, rec in enumerate(records):
        base = rec.pose
        pts = []
        padded = False
        for k in range(1, horizon + 1):
            j = f + k
            if j >= n:
                j = n - 1
                padded = True
            p = records[j].pose
            pts.append(base.to_local(p.x, p.y))
        out.append(replace(rec, gt_waypoints=tuple(pts), gt_padded=padded))
    return out


def plan_spaced_targets(log: EpisodeLog, stride: int = 5, n: int = 5) -> dict:
    """Ground truth at the plan's 0.5 s spacing: frames f+5, ..., f+25 in the frame-f ego frame."""
    targets = {}
    offsets = [stride * k for k in range(1, n + 1)]
    for f in range(len(log.records)):
        pts = future_poses_local(log.records, f, offsets)
        if pts is not None:
            targets[log.records[f].frame] = tuple(pts)
    return targets


# --- BEV dumps --------------------------------------------------------------

def dump_bev(grid: BevGrid) -> bytes:
    C, H, W = grid.data.shape
    header = BEV_MAGIC + struct.pack("<III", H, W, C)
    return header + np.ascontiguousarray(grid.data, dtype="<f4").tobytes()


def load_bev(data: bytes, resolution: float = 0.5) -> BevGrid:
    if len(data) < 16 or data[:4] != BEV_MAGIC:
        raise LogFormatError("not a BEVG dump (bad magic)")
    H, W, C = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * C * H * W
    if len(data) != expected:
        raise LogFormatError(f"BEVG size {len(data)} does not match header ({expected})")
    arr = np.frombuffer(data, dtype="<f4", offset=16).reshape(C, H, W).astype(np.float32)
    return BevGrid(arr, resolution)


# --- open-loop replay -------------------------------------------------------

def replay_open_loop(log: EpisodeLog, planner, inputs: RouteInputs, cfg=None) -> DisplacementResult:
    """Re-simulate the logged episode, query ``planner`` at every frame and
    compare its waypoints with the logged future ego positions at plan spacing.

    Frames without 25 logged future frames are excluded.
    """
    from bevbench.harness import replay_worlds

    targets = plan_spaced_targets(log)
    results = []
    for record, world, obs in replay_worlds(log, inputs, cfg, needs_bev=getattr(planner, "needs_bev", True)):
        if record.frame not in targets:
            break  # only the tail lacks 25 future frames
        plan = call_planner(planner, obs, world)
        results.append(displacement_errors(plan.waypoints, targets[record.frame]))
    if not results:
        return DisplacementResult(math.nan, math.nan, 0)
    return mean_displacement(results)


def bev_file_size(height: int, width: int, channels: int = len(CHANNELS)) -> int:
    return 16 + 4 * channels * height * width
