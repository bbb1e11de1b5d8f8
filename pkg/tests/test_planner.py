from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import agent, inputs_from_doc, make_routes, straight_world
from bevbench.config import BenchConfig, PlannerConfig
from bevbench.geometry import Pose2D
from bevbench.harness import run_episode
from bevbench.instructions import Instruction, NavCommand
from bevbench.planner import (
    LatencyPlanner,
    NoisyPlanner,
    Observation,
    OffRouteError,
    OraclePlanner,
    WaypointPlan,
    call_planner,
    make_planner,
    parse_planner_spec,
    perturb_latency,
    perturb_noise,
    straight_plan,
)
from bevbench.sim import TrafficLight

RED = {"green": 1.0, "yellow": 1.0, "red": 1e6}


def red_light(x):
    return TrafficLight("tl", ((x, -1.75), (x, 1.75)), "l0", RED, 2.0)


def oracle_plan(world, instr=None, **kw):
    return OraclePlanner(**kw).plan(Observation((), instr, world.ego.speed, world.frame), world)


def test_straight_cruise_waypoints():
    w = straight_world(length=200.0, ego_pose=Pose2D(10.0, 0.0, 0.0), speed=6.0)
    w = replace(w, arc_position=10.0)
    plan = oracle_plan(w)
    assert plan.as_array() == pytest.approx(np.array([[3, 0], [6, 0], [9, 0], [12, 0], [15, 0]]), abs=1e-9)


def test_plan_has_five_finite_waypoints():
    with pytest.raises(ValueError):
        WaypointPlan(((1.0, 0.0),) * 4)
    with pytest.raises(ValueError):
        WaypointPlan(((1.0, 0.0),) * 4 + ((float("nan"), 0.0),))
    with pytest.raises(ValueError):
        WaypointPlan(((6.0, 0.0),) * 5).check_reach(20.0, 0.5)


def test_observation_history_capped_at_forty():
    Observation(tuple(range(40)))
    with pytest.raises(ValueError):
        Observation(tuple(range(41)))


def test_red_light_five_meters_ahead_stops_before_line():
    w = straight_world(lights=[red_light(20.0)], ego_pose=Pose2D(15.0 - 1.25, 0.0, 0.0), speed=2.0)
    w = replace(w, arc_position=15.0 - 1.25)
    plan = oracle_plan(w).as_array()
    assert (w.ego.pose.x + plan[:, 0] + 1.25 <= 20.0).all()
    # final plan speed ~ 0: the last two waypoints coincide
    assert np.hypot(*(plan[-1] - plan[-2])) / 0.5 == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 58.7), st.floats(0.0, 12.0), st.floats(-0.5, 0.5))
def test_oracle_never_plans_past_red_line(x, speed, y):
    w = straight_world(length=120.0, lights=[red_light(60.0)], ego_pose=Pose2D(x, y, 0.0), speed=speed)
    w = replace(w, arc_position=x)
    plan = oracle_plan(w).as_array()
    assert (x + plan[:, 0] + 1.25 <= 60.0 + 1e-9).all()


def test_green_light_does_not_stop():
    tl = TrafficLight("tl", ((20.0, -1.75), (20.0, 1.75)), "l0", {"green": 1e6, "yellow": 1, "red": 1}, 0.0)
    w = straight_world(lights=[tl], ego_pose=Pose2D(10.0, 0.0, 0.0), speed=6.0)
    plan = oracle_plan(replace(w, arc_position=10.0))
    assert plan.waypoints[-1][0] == pytest.approx(15.0)


def test_leading_obstacle_keeps_safety_gap():
    w = straight_world(agents=[agent("v", "vehicle", 30.0, 0.0, half=(2.0, 1.0))],
                       ego_pose=Pose2D(10.0, 0.0, 0.0), speed=6.0)
    plan = oracle_plan(replace(w, arc_position=10.0)).as_array()
    # ego front (x + 2) must stay 6 m behind the obstacle's rear (28)
    assert (10.0 + plan[:, 0] + 2.0 <= 28.0 - 6.0 + 1e-9).all()


def test_misleading_instruction_is_ignored():
    w = straight_world(length=200.0, ego_pose=Pose2D(10.0, 0.0, 0.0), speed=4.0)
    w = replace(w, arc_position=10.0, frame=30)
    mislead = Instruction("m", NavCommand.CHANGE_LANE_LEFT, "Change to the left lane.", True, 20, 5.0,
                          issue_lane="l0", activated_frame=20)
    base = oracle_plan(w)
    plan = oracle_plan(w, mislead)
    assert plan.waypoints == base.waypoints
    assert plan.completion_flag is False
    # once the designated time has passed, the planner reports it done
    assert oracle_plan(replace(w, frame=120), mislead).completion_flag is True


def test_off_route_refused():
    w = straight_world(ego_pose=Pose2D(10.0, 5.0, 0.0))
    with pytest.raises(OffRouteError):
        oracle_plan(w)


def test_oracle_is_pure():
    w = straight_world(lights=[red_light(40.0)], ego_pose=Pose2D(20.0, 0.3, 0.05), speed=5.0)
    planner = OraclePlanner()
    obs = Observation((), None, 5.0, 0)
    assert planner.plan(obs, w) == planner.plan(obs, w)


# --- noise -----------------------------------------------------------------

def test_sigma_zero_identity():
    plan = straight_plan(6.0)
    assert perturb_noise(plan, 0.0, np.random.default_rng(0)) == plan


def test_noise_std_within_three_percent():
    rng = np.random.default_rng(123)
    base = straight_plan(6.0)
    samples = np.array([perturb_noise(base, 0.5, rng).as_array() - base.as_array() for _ in range(10000)])
    std = samples.std(axis=0, ddof=1)
    assert np.all(np.abs(std - 0.5) <= 0.03 * 0.5)
    assert np.all(np.abs(samples.mean(axis=0)) < 0.03)


def test_noise_keeps_flag_and_rejects_negative_sigma():
    plan = straight_plan(6.0, flag=True)
    assert perturb_noise(plan, 0.3, np.random.default_rng(1)).completion_flag is True
    with pytest.raises(ValueError):
        perturb_noise(plan, -0.1, np.random.default_rng(1))
    with pytest.raises(ValueError):
        NoisyPlanner(OraclePlanner(), -1.0)


def test_noisy_planner_deterministic_per_seed_and_frame():
    w = straight_world(ego_pose=Pose2D(10.0, 0.0, 0.0), speed=6.0)
    obs = Observation((), None, 6.0, 17)
    a = NoisyPlanner(OraclePlanner(), 0.5, seed=3)
    b = NoisyPlanner(OraclePlanner(), 0.5, seed=3)
    assert call_planner(a, obs, w) == call_planner(b, obs, w) == call_planner(a, obs, w)
    c = NoisyPlanner(OraclePlanner(), 0.5, seed=4)
    assert call_planner(c, obs, w) != call_planner(a, obs, w)


# --- latency ---------------------------------------------------------------

class FrameStamp:
    """Non-privileged planner whose output encodes the frame it saw."""

    privileged = False
    needs_bev = False

    def plan(self, obs):
        return WaypointPlan(tuple((float(obs.frame), float(k)) for k in range(5)))


def test_latency_two_replays_frame_eight_at_ten():
    inner = FrameStamp()
    wrapped = perturb_latency(FrameStamp(), 2)
    outs = {f: wrapped.plan(Observation((), None, 3.0, f)) for f in range(11)}
    assert outs[10] == inner.plan(Observation((), None, 3.0, 8))
    assert outs[0] == straight_plan(3.0) and outs[1] == straight_plan(3.0)


def test_latency_zero_is_identity():
    wrapped = LatencyPlanner(FrameStamp(), 0)
    for f in range(5):
        obs = Observation((), None, 1.0, f)
        assert wrapped.plan(obs) == FrameStamp().plan(obs)
    with pytest.raises(ValueError):
        LatencyPlanner(FrameStamp(), -1)


def _mean_lateral(inputs, spec, cfg):
    result = run_episode(inputs, make_planner(spec, cfg.planner, cfg.sim), cfg, seed=0)
    return np.mean([r.progress["lateral_offset"] for r in result.log.records])


@pytest.mark.parametrize("route", ["scenarios/circle_r20.json", "tiny/junction_left.json"])
def test_latency_five_tracks_curves_worse(route):
    cfg = BenchConfig()
    inputs = inputs_from_doc(make_routes.routes()[route])
    k0 = _mean_lateral(inputs, "oracle", cfg)
    k5 = _mean_lateral(inputs, "oracle+latency:5", cfg)
    assert k5 > k0


# --- specs -----------------------------------------------------------------

def test_parse_planner_spec():
    assert parse_planner_spec("oracle") == [("oracle", None)]
    assert parse_planner_spec("oracle+noise:0.5") == [("oracle", None), ("noise", 0.5)]
    assert parse_planner_spec("oracle+latency:3") == [("oracle", None), ("latency", 3)]
    for bad in ("learned", "oracle+noise:-1", "oracle+latency:-2", "oracle+blur:1", "oracle+noise:x"):
        with pytest.raises(ValueError):
            parse_planner_spec(bad)


def test_make_planner_wraps_in_order():
    p = make_planner("oracle+noise:0.2+latency:3", PlannerConfig())
    assert isinstance(p, LatencyPlanner) and isinstance(p.inner, NoisyPlanner)
    assert p.privileged
    with pytest.raises(ValueError):
        make_planner("echo-gt")
