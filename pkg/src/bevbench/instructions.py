"""Language navigation instructions: extraction, scheduling, misleads, adjudication."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np

from bevbench.config import InstructionConfig
from bevbench.sim.types import LANE_CHANGE_LENGTH, RoadNetwork, Route
from bevbench.sim.world import Progress, WorldState


class NavCommand(str, enum.Enum):
    VOID = "VOID"
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    STRAIGHT = "STRAIGHT"
    LANE_FOLLOW = "LANE_FOLLOW"
    CHANGE_LANE_LEFT = "CHANGE_LANE_LEFT"
    CHANGE_LANE_RIGHT = "CHANGE_LANE_RIGHT"


class Status(str, enum.Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"


TURNS = {"left": NavCommand.LEFT, "right": NavCommand.RIGHT, "straight": NavCommand.STRAIGHT}
BRANCH_OF = {v: k for k, v in TURNS.items()}
MISLEAD_CANDIDATES = (NavCommand.LEFT, NavCommand.RIGHT,
                      NavCommand.CHANGE_LANE_LEFT, NavCommand.CHANGE_LANE_RIGHT)
EXIT_MARGIN = 2.0


@lru_cache(maxsize=None)
def load_templates(text: str | None = None) -> dict:
    """Parse the ``COMMAND<TAB>text`` asset; ``#`` lines are comments."""
    if text is None:
        text = resources.files("bevbench").joinpath("data/templates.tsv").read_text("utf-8")
    table: dict[NavCommand, list[str]] = {c: [] for c in NavCommand}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            cmd, template = line.split("\t", 1)
            table[NavCommand(cmd)].append(template.strip())
        except ValueError as exc:
            raise ValueError(f"templates line {lineno}: {exc}") from None
    return {c: tuple(v) for c, v in table.items()}


def instantiate_text(cmd: NavCommand, rng: np.random.Generator) -> str:
    templates = load_templates()[NavCommand(cmd)]
    return templates[int(rng.integers(len(templates)))]


@dataclass(frozen=True)
class Instruction:
    id: str
    command: NavCommand
    text: str
    misleading: bool
    issue_frame: int
    issue_arc: float
    timeout_frames: int = 100
    status: Status = Status.PENDING
    target_lane: str | None = None
    junction_id: str | None = None
    issue_lane: str | None = None
    lane_width: float = 3.5
    activated_frame: int | None = None
    max_lateral_offset: float = 0.0
    resolved_frame: int | None = None

    def __post_init__(self):
        if self.timeout_frames <= 0:
            raise ValueError("timeout_frames must be positive")


@dataclass(frozen=True)
class InstructionSchedule:
    entries: tuple[Instruction, ...]
    mislead_rate: float

    def __post_init__(self):
        frames = [e.issue_frame for e in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("issue frames must be strictly increasing")


@dataclass(frozen=True)
class _Event:
    arc: float
    command: NavCommand
    target_lane: str | None = None
    junction_id: str | None = None
    busy_until: float = 0.0


def _route_events(route: Route, network: RoadNetwork, cfg: InstructionConfig) -> list[_Event]:
    events = []
    seq = route.lane_sequence
    for i in range(1, len(seq)):
        prev, cur = network.lanes[seq[i - 1]], seq[i]
        span = route.spans[i]
        if cur == prev.left_neighbor or cur == prev.right_neighbor:
            cmd = NavCommand.CHANGE_LANE_LEFT if cur == prev.left_neighbor else NavCommand.CHANGE_LANE_RIGHT
            events.append(_Event(span.start - cfg.trigger_lead, cmd, cur, None,
                                 span.start + LANE_CHANGE_LENGTH + EXIT_MARGIN))
        elif network.lanes[cur].in_junction:
            found = network.junction_for(prev.id, cur)
            if found is None:
                continue
            junction, branch = found
            events.append(_Event(span.start - cfg.trigger_lead, TURNS[branch], cur, junction.id,
                                 span.end + EXIT_MARGIN))
    return sorted(events, key=lambda e: e.arc)


def _timeline(route: Route, network: RoadNetwork, cfg: InstructionConfig) -> list[_Event]:
    out: list[_Event] = []
    next_lf = 0.0
    length = route.length

    def emit(ev: _Event):
        arc = max(ev.arc, 0.0)
        if out and arc < out[-1].arc + cfg.min_spacing:
            arc = out[-1].arc + cfg.min_spacing
        if arc <= length:
            out.append(replace(ev, arc=arc))

    for ev in _route_events(route, network, cfg) + [None]:
        stop = length if ev is None else max(ev.arc, 0.0)
        while stop - next_lf >= cfg.follow_interval and next_lf < length:
            emit(_Event(next_lf, NavCommand.LANE_FOLLOW))
            next_lf += cfg.follow_interval
        if ev is not None:
            emit(ev)
            next_lf = max(out[-1].arc + cfg.follow_interval, ev.busy_until)
    return out


def commands_from_route(route: Route, network: RoadNetwork,
                        cfg: InstructionConfig | None = None) -> list[tuple[float, NavCommand]]:
    """Arc-positioned commands: turns and lane changes ``trigger_lead`` meters
    ahead of the maneuver, LANE_FOLLOW filling gaps of ``follow_interval``."""
    cfg = cfg or InstructionConfig()
    for lid in route.lane_sequence:
        if lid not in network.lanes:
            raise KeyError(f"route references unknown lane {lid}")
    return [(ev.arc, ev.command) for ev in _timeline(route, network, cfg)]


def command_feasible(network: RoadNetwork, lane_id: str, cmd: NavCommand) -> bool:
    lane = network.lanes[lane_id]
    if cmd in BRANCH_OF:
        return BRANCH_OF[cmd] in network.branches_from(lane_id)
    if cmd is NavCommand.CHANGE_LANE_LEFT:
        return lane.left_neighbor is not None
    if cmd is NavCommand.CHANGE_LANE_RIGHT:
        return lane.right_neighbor is not None
    return True


def schedule_instructions(route: Route, network: RoadNetwork, mislead_rate: float,
                          rng: np.random.Generator, cfg: InstructionConfig | None = None,
                          dt: float = 0.1) -> InstructionSchedule:
    """Time the route's commands and intersperse infeasible (misleading) ones.

    One mislead candidate per gap between consecutive feasible instructions,
    placed at the gap's midpoint, kept with probability ``mislead_rate``. A
    mislead is only placed where the route leaves room for its whole timeout
    at the reference speed, so it can be adjudicated before the route ends.
    """
    cfg = cfg or InstructionConfig()
    if not 0.0 <= mislead_rate <= 1.0:
        raise ValueError("mislead_rate must be in [0, 1]")
    timeline = _timeline(route, network, cfg)
    timeout_distance = cfg.reference_speed * cfg.timeout_frames * dt
    items: list[tuple[_Event, bool]] = []
    for k, ev in enumerate(timeline):
        items.append((ev, False))
        if k + 1 >= len(timeline):
            break
        u = rng.random()
        mid = 0.5 * (ev.arc + timeline[k + 1].arc)
        if u >= mislead_rate or mid + timeout_distance > route.length:
            continue
        lane = route.lane_at(mid)
        options = [c for c in MISLEAD_CANDIDATES if not command_feasible(network, lane, c)]
        if not options:
            continue
        cmd = options[int(rng.integers(len(options)))]
        items.append((_Event(mid, cmd), True))

    entries = []
    last_frame = -1
    for n, (ev, misleading) in enumerate(items):
        frame = max(int(round(ev.arc / cfg.reference_speed / dt)), last_frame + 1)
        last_frame = frame
        lane = route.lane_at(ev.arc)
        entries.append(Instruction(
            id=f"i{n:03d}", command=ev.command, text=instantiate_text(ev.command, rng),
            misleading=misleading, issue_frame=frame, issue_arc=ev.arc,
            timeout_frames=cfg.timeout_frames, target_lane=ev.target_lane,
            junction_id=ev.junction_id, issue_lane=lane, lane_width=network.lanes[lane].width,
        ))
    return InstructionSchedule(tuple(entries), mislead_rate)


def resolve_completion(instr: Instruction, world: WorldState, progress: Progress) -> Status:
    """Ground-truth status of an active instruction at the current tick."""
    if instr.status is not Status.PENDING:
        return instr.status
    started = instr.issue_frame if instr.activated_frame is None else instr.activated_frame
    elapsed = world.frame - started
    lateral = max(instr.max_lateral_offset, progress.lateral_offset)
    if lateral >= instr.lane_width:
        return Status.FAILED
    net = world.network
    if instr.misleading or instr.command in (NavCommand.LANE_FOLLOW, NavCommand.VOID):
        return Status.COMPLETED if elapsed >= instr.timeout_frames else Status.PENDING
    lane = net.match_lane(world.ego.pose.x, world.ego.pose.y)
    if instr.command in BRANCH_OF:
        junction = next(j for j in net.junctions if j.id == instr.junction_id)
        for branch_lane in junction.branches.values():
            if lane in net.lanes[branch_lane].successors:
                return Status.COMPLETED if branch_lane == instr.target_lane else Status.FAILED
        return Status.PENDING
    return Status.COMPLETED if lane == instr.target_lane else Status.PENDING


class InstructionTracker:
    """Per-episode cursor: activates instructions by arc position and adjudicates them.

    Activating a new non-misleading instruction supersedes a pending
    LANE_FOLLOW/VOID one (completed if the ego is still on route), so at most
    one non-misleading instruction is pending at a time.
    """

    def __init__(self, schedule: InstructionSchedule):
        self.entries = list(schedule.entries)
        self._next = 0
        self.current: Instruction | None = None

    def _active(self):
        return [i for i, e in enumerate(self.entries)
                if e.activated_frame is not None and e.status is Status.PENDING]

    def update(self, world: WorldState, progress: Progress) -> None:
        while self._next < len(self.entries) and progress.arc_position >= self.entries[self._next].issue_arc:
            new = self.entries[self._next]
            if not new.misleading:
                for i in self._active():
                    old = self.entries[i]
                    if not old.misleading:
                        status = resolve_completion(old, world, progress)
                        if status is Status.PENDING:
                            status = (Status.COMPLETED if old.command in (NavCommand.LANE_FOLLOW, NavCommand.VOID)
                                      else Status.FAILED)
                        self.entries[i] = replace(old, status=status, resolved_frame=world.frame)
            self.entries[self._next] = replace(new, activated_frame=world.frame)
            self.current = self.entries[self._next]
            self._next += 1
        for i in self._active():
            e = self.entries[i]
            status = resolve_completion(e, world, progress)
            e = replace(e, status=status, max_lateral_offset=max(e.max_lateral_offset, progress.lateral_offset),
                        resolved_frame=None if status is Status.PENDING else world.frame)
            self.entries[i] = e
            if self.current is not None and self.current.id == e.id:
                self.current = e

    def finalize(self, reason: str | None, frame: int | None = None) -> None:
        """Close the episode: on success, a pending LANE_FOLLOW/VOID has been
        followed to the end of the route and counts as completed."""
        if reason != "success":
            return
        for i in self._active():
            e = self.entries[i]
            if not e.misleading and e.command in (NavCommand.LANE_FOLLOW, NavCommand.VOID):
                self.entries[i] = replace(e, status=Status.COMPLETED, resolved_frame=frame)

    def current_instruction(self) -> Instruction | None:
        """The most recently activated instruction that is still pending."""
        active = self._active()
        return self.entries[active[-1]] if active else None
