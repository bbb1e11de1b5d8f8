"""Closed-loop episode runner, deterministic replay and the parallel benchmark."""
from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bevbench.config import BenchConfig, config_hash, fnv1a64
from bevbench.control import ControllerState, ControlSignal, control_step
from bevbench.dataio import (
    EpisodeLog,
    FrameRecord,
    RouteInputs,
    append_frame,
    dump_bev,
    fill_ground_truth,
    load_route_path,
    write_log,
)
from bevbench.instructions import InstructionTracker, schedule_instructions
from bevbench.planner import Observation, OffRouteError, call_planner, make_planner
from bevbench.scoring import RouteScore, aggregate, route_score
from bevbench.sensors import rasterize_bev
from bevbench.sim.types import Infraction, InfractionKind
from bevbench.sim.world import (
    WorldState,
    check_termination,
    initial_world,
    route_progress,
    step_world,
)


def episode_seed(base_seed: int, route_id: str, rep: int) -> int:
    return fnv1a64(f"{base_seed}:{route_id}:{rep}".encode("utf-8"))


def _setup(inputs: RouteInputs, seed: int, mislead_rate: float, cfg: BenchConfig):
    world = initial_world(inputs.network, inputs.route, inputs.lights, inputs.triggers, inputs.agents,
                          seed, cfg.sim)
    rng = np.random.default_rng(seed)
    schedule = schedule_instructions(inputs.route, inputs.network, mislead_rate, rng,
                                     cfg.instruction, cfg.sim.dt)
    return world, schedule


def affordances(world: WorldState, arc: float) -> dict:
    """Light state / distance of the next stop line on the route and the lead-agent gap."""
    route = world.route
    path = route.reference_path
    front = arc + world.ego.wheelbase / 2
    best = None
    for light in world.lights:
        (ax, ay), (bx, by) = light.stop_line
        s, d = path.project((ax + bx) / 2, (ay + by) / 2, front, route.length)
        if d > world.network.lanes[light.controlled_lane].width or route.lane_at(s - 1e-6) != light.controlled_lane:
            continue
        if best is None or s < best[0]:
            best = (s, light.state_at(world.sim_time))
    gap = None
    for agent in world.agents:
        s, d = path.project(agent.pose.x, agent.pose.y, arc, route.length)
        if s <= arc or d > world.network.lanes[route.lane_at(s)].width / 2 + max(agent.half_extents):
            continue
        if gap is None or s - arc < gap:
            gap = s - arc
    return {
        "light_state_ahead": best[1].value if best else None,
        "distance_to_stop_line": (best[0] - front) if best else None,
        "lead_vehicle_gap": gap,
    }


def _instruction_dict(instr) -> dict | None:
    if instr is None:
        return None
    return {"id": instr.id, "command": instr.command.value, "text": instr.text, "misleading": instr.misleading}


def _schedule_dicts(entries) -> list:
    return [{"id": e.id, "command": e.command.value, "text": e.text, "misleading": e.misleading,
             "issue_frame": e.issue_frame, "issue_arc": e.issue_arc, "timeout_frames": e.timeout_frames,
             "status": e.status.value, "activated_frame": e.activated_frame,
             "resolved_frame": e.resolved_frame} for e in entries]


@dataclass
class EpisodeResult:
    log: EpisodeLog
    score: RouteScore
    instructions: list


def run_episode(inputs: RouteInputs, planner, cfg: BenchConfig | None = None, seed: int = 0,
                mislead_rate: float = 0.0, planner_name: str = "custom", rep: int = 0,
                bev_sink=None) -> EpisodeResult:
    """Drive one route closed-loop: BEV -> planner -> PID -> world, at 10 Hz."""
    cfg = cfg or BenchConfig()
    dt = cfg.sim.dt
    world, schedule = _setup(inputs, seed, mislead_rate, cfg)
    tracker = InstructionTracker(schedule)
    ctrl = ControllerState()
    history: deque = deque(maxlen=cfg.planner.history_frames)
    needs_bev = getattr(planner, "needs_bev", True) or bev_sink is not None
    log = EpisodeLog({
        "route_id": inputs.route_id, "route_file": inputs.source, "seed": seed, "rep": rep,
        "config_hash": config_hash(cfg), "planner": planner_name, "mislead_rate": mislead_rate,
        "dt": dt,
    })
    infractions: list[Infraction] = []
    reason = None
    progress = route_progress(world, cfg.sim.progress_window)
    while True:
        term = check_termination(world, progress, world.sim_time, cfg.sim)
        if not term.running:
            reason = term.reason
            break
        tracker.update(world, progress)
        if needs_bev:
            grid = rasterize_bev(world, cfg.sensor)
            history.append(grid)
            if bev_sink is not None:
                bev_sink(world.frame, grid)
        current = tracker.current_instruction()
        obs = Observation(tuple(history), current, world.ego.speed, world.frame)
        try:
            plan = call_planner(planner, obs, world)
        except OffRouteError:
            reason = "route_deviation"
            break
        plan.check_reach(cfg.sim.max_speed, cfg.planner.plan_spacing)
        control, ctrl = control_step(plan, world.ego.speed, ctrl, cfg.control, dt)
        nxt, step_infractions = step_world(world, control, dt, cfg.sim)
        infractions.extend(step_infractions)
        ego = world.ego
        append_frame(log, FrameRecord(
            frame=world.frame, sim_time=world.sim_time,
            ego={"x": ego.pose.x, "y": ego.pose.y, "yaw": ego.pose.yaw, "speed": ego.speed,
                 "steer_angle": ego.steer_angle},
            control=control.to_dict(), instruction=_instruction_dict(current),
            plan=plan.waypoints, completion_flag=plan.completion_flag,
            affordances=affordances(world, progress.arc_position),
            progress={"arc_position": progress.arc_position, "completion": progress.completion_fraction,
                      "lateral_offset": progress.lateral_offset},
            infractions=tuple(step_infractions),
        ))
        world = nxt
        progress = route_progress(world, cfg.sim.progress_window)
    tracker.finalize(reason, world.frame)
    if reason in ("route_deviation", "timeout"):
        infractions.append(Infraction.of(InfractionKind(reason), world.frame))
    score = route_score(inputs.route_id, inputs.route.length, progress.completion_fraction,
                        infractions, reason)
    log.records = fill_ground_truth(log.records)
    log.result = score
    log.header["instructions"] = _schedule_dicts(tracker.entries)
    log.header["frames"] = len(log.records)
    return EpisodeResult(log, score, list(tracker.entries))


def replay_worlds(log: EpisodeLog, inputs: RouteInputs, cfg: BenchConfig | None = None, needs_bev: bool = True):
    """Re-simulate a logged episode from its controls.

    Yields ``(record, world, observation)`` per frame; raises if the replayed
    ego state drifts from the log (the simulation is deterministic).
    """
    cfg = cfg or BenchConfig()
    dt = cfg.sim.dt
    world, schedule = _setup(inputs, int(log.header["seed"]), float(log.header["mislead_rate"]), cfg)
    tracker = InstructionTracker(schedule)
    history: deque = deque(maxlen=cfg.planner.history_frames)
    for record in log.records:
        e = world.ego
        logged = record.ego
        if (world.frame != record.frame or e.pose.x != logged["x"] or e.pose.y != logged["y"]
                or e.pose.yaw != logged["yaw"] or e.speed != logged["speed"]):
            raise RuntimeError(f"replay diverged from the log at frame {record.frame}")
        progress = route_progress(world, cfg.sim.progress_window)
        tracker.update(world, progress)
        if needs_bev:
            history.append(rasterize_bev(world, cfg.sensor))
        obs = Observation(tuple(history), tracker.current_instruction(), e.speed, world.frame)
        yield record, world, obs
        c = record.control
        world, _ = step_world(world, ControlSignal(c["steer"], c["throttle"], c["brake"]), dt, cfg.sim)


# --- benchmark --------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeJob:
    route_file: str
    rep: int
    seed: int
    planner_spec: str
    mislead_rate: float
    cfg_dict: dict
    log_dir: str | None = None
    bev_dir: str | None = None


@dataclass
class EpisodeOutcome:
    job: EpisodeJob
    score: RouteScore | None
    log_path: str | None = None
    error: str | None = None
    frames: int = 0


def _log_name(route_id: str, rep: int) -> str:
    return f"{route_id}_rep{rep}.jsonl"


def run_job(job: EpisodeJob) -> EpisodeOutcome:
    try:
        cfg = BenchConfig.from_dict(job.cfg_dict)
        inputs = load_route_path(job.route_file)
        seed = episode_seed(job.seed, inputs.route_id, job.rep)
        planner = make_planner(job.planner_spec, cfg.planner, cfg.sim, seed=seed)
        sink = None
        if job.bev_dir is not None:
            bev_dir = Path(job.bev_dir) / f"{inputs.route_id}_rep{job.rep}"
            bev_dir.mkdir(parents=True, exist_ok=True)

            def write_bev(frame, grid):
                (bev_dir / f"{frame:06d}.bevg").write_bytes(dump_bev(grid))

            sink = write_bev

        result = run_episode(inputs, planner, cfg, seed, job.mislead_rate, job.planner_spec, job.rep, sink)
        path = None
        if job.log_dir is not None:
            path = str(Path(job.log_dir) / _log_name(inputs.route_id, job.rep))
            Path(path).write_bytes(write_log(result.log))
        return EpisodeOutcome(job, result.score, path, None, len(result.log.records))
    except Exception as exc:  # an episode crash must not take down the benchmark
        return EpisodeOutcome(job, None, None, f"{type(exc).__name__}: {exc}")


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def run_benchmark(route_files, planner_spec: str = "oracle", reps: int = 3, seed: int = 0,
                  mislead_rate: float = 0.2, cfg: BenchConfig | None = None, workers: int | None = None,
                  log_dir: str | None = None, bev_dir: str | None = None):
    """Run routes x reps episodes; returns (report or None, outcomes in job order)."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    cfg = cfg or BenchConfig()
    files = [str(f) for f in route_files]
    jobs = [EpisodeJob(f, r, seed, planner_spec, mislead_rate, cfg.to_dict(), log_dir, bev_dir)
            for f in files for r in range(reps)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        outcomes = [run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_job, jobs))
    if any(o.score is None for o in outcomes):
        return None, outcomes
    per_route = [[o.score for o in outcomes[i * reps:(i + 1) * reps]] for i in range(len(files))]
    return aggregate(per_route), outcomes

