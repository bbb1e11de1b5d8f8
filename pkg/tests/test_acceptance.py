"""End-to-end acceptance suite.

Each test checks one acceptance criterion at its stated tolerance and prints a
single ``PASS``/``FAIL`` line, so ``pytest -v`` output doubles as a report.
"""
import math
import time

import numpy as np
import pytest

from conftest import ROUTES, TINY_ROUTES, inputs_from_doc, make_routes, straight_inputs
from test_control import naive_pid, run_pid
from test_scoring import naive_displacement
from test_sensors import brute_force_planes, dilate, random_scene
from bevbench.config import BenchConfig, PidConfig, PlannerConfig
from bevbench.dataio import load_route_path, replay_open_loop
from bevbench.harness import run_benchmark, run_episode
from bevbench.instructions import Status
from bevbench.planner import OraclePlanner, make_planner
from bevbench.scoring import SHORT_MAX, TINY_MAX, bucket_of, displacement_errors, driving_score, mean_displacement
from bevbench.sensors import rasterize_bev
from bevbench.geometry import Pose2D
from bevbench.sim import EgoState, ego_kinematics_step

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for a criterion, then assert it."""

    def report(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, f"criterion {number}: {detail}"

    return report


def oracle(cfg):
    return OraclePlanner(cfg.planner, cfg.sim)


# --- 1: metric arithmetic against published rows -----------------------------

# (route completion, infraction score, published driving score) for the two rows
PUBLISHED_ROWS = {"method": (59.7, 0.82, 48.9), "baseline": (53.2, 0.83, 44.0)}


@pytest.mark.parametrize("row", sorted(PUBLISHED_ROWS))
def test_c1_driving_score_reproduces_published_row(row, verdict):
    rc, is_, published = PUBLISHED_ROWS[row]
    t0 = time.perf_counter()
    ds = driving_score(rc, is_)
    elapsed = time.perf_counter() - t0
    shown = round(ds, 1)
    ok = abs(shown - published) <= 0.1 + 1e-9 and elapsed < 1.0
    verdict(1, ok, f"{row}: DS({rc}, {is_}) = {ds:.3f} -> {shown} vs published {published} (tol 0.1), "
                   f"{elapsed * 1e3:.3f} ms")


def test_c1_published_rows_consistent_with_rounded_inputs(verdict):
    """The published DS lies inside the range allowed by 1-decimal RC and 2-decimal IS."""
    ok = True
    for rc, is_, published in PUBLISHED_ROWS.values():
        lo = driving_score(rc - 0.05, is_ - 0.005)
        hi = driving_score(rc + 0.05, is_ + 0.005)
        ok &= lo <= published <= hi
    verdict(1, ok, "published rows lie within the rounding interval of their RC and IS")


# --- 2: oracle closed loop on the tiny suite ----------------------------------

def test_c2_oracle_clean_on_tiny_suite(verdict):
    t0 = time.perf_counter()
    report, outcomes = run_benchmark(TINY_ROUTES, "oracle", reps=3, seed=0, workers=1)
    elapsed = time.perf_counter() - t0
    assert len(TINY_ROUTES) == 5 and report is not None
    scores = [s for reps in report.per_route for s in reps]
    ok = (len(scores) == 15 and all(s.rc >= 99.0 and s.is_ == 1.0 and s.ds >= 99.0 for s in scores)
          and elapsed < 60.0)
    worst = min(scores, key=lambda s: s.ds)
    verdict(2, ok, f"{len(scores)} episodes, min DS {worst.ds:.2f} ({worst.route_id}), "
                   f"min RC {min(s.rc for s in scores):.2f}, IS all 1.0: "
                   f"{all(s.is_ == 1.0 for s in scores)}, {elapsed:.1f} s")


# --- 3: infraction sensitivity ------------------------------------------------

def test_c3_single_pedestrian_collision(verdict):
    cfg = BenchConfig()
    # a scripted pedestrian steps into the lane too late for the oracle to stop
    inputs = load_route_path(ROUTES / "scenarios" / "pedestrian_crossing.json")
    score = run_episode(inputs, oracle(cfg), cfg, seed=0).score
    kinds = [i.kind.value for i in score.infractions]
    ok = abs(score.is_ - 0.50) <= 1e-9 and score.ds == 0.5 * score.rc and kinds == ["collision_pedestrian"]
    verdict(3, ok, f"pedestrian collision: IS {score.is_}, DS {score.ds} = 0.5 * RC {score.rc}, {kinds}")


def test_c3_single_red_light_crossing(verdict):
    cfg = BenchConfig()
    inputs = load_route_path(ROUTES / "scenarios" / "red_light_straight.json")
    score = run_episode(inputs, OraclePlanner(cfg.planner, cfg.sim, respect_lights=False), cfg, seed=0).score
    kinds = [i.kind.value for i in score.infractions]
    ok = abs(score.is_ - 0.70) <= 1e-9 and kinds == ["red_light"]
    verdict(3, ok, f"red-light crossing: IS {score.is_}, infractions {kinds}")


# --- 4: misleading instructions -------------------------------------------------

@pytest.mark.parametrize("length", [100.0, 300.0])
def test_c4_misleads_time_out_without_effect(length, verdict):
    cfg = BenchConfig()
    inputs = straight_inputs(length)
    base = run_episode(inputs, oracle(cfg), cfg, seed=4, mislead_rate=0.0)
    misled = run_episode(inputs, oracle(cfg), cfg, seed=4, mislead_rate=1.0)
    misleads = [e for e in misled.instructions if e.misleading]
    timeout = cfg.instruction.timeout_frames
    resolved = all(e.status is Status.COMPLETED and e.resolved_frame - e.activated_frame == timeout
                   for e in misleads)
    max_offset = max(abs(r.progress["lateral_offset"]) for r in misled.log.records)
    same = abs(misled.score.rc - base.score.rc) <= 1e-9 and abs(misled.score.is_ - base.score.is_) <= 1e-9
    ok = bool(misleads) and resolved and same and max_offset < 0.5
    verdict(4, ok, f"{length:.0f} m: {len(misleads)} misleads, all completed by timeout: {resolved}, "
                   f"RC {misled.score.rc:.3f} vs {base.score.rc:.3f}, IS {misled.score.is_} vs {base.score.is_}, "
                   f"max |lateral| {max_offset:.3f} m")


# --- 5: control fidelity --------------------------------------------------------

def test_c5_circle_tracking(verdict):
    cfg = BenchConfig().with_overrides({"planner.cruise_speed": 5.0})
    inputs = inputs_from_doc(make_routes.routes()["scenarios/circle_r20.json"])
    log = run_episode(inputs, oracle(cfg), cfg, seed=0).log
    late = [abs(r.progress["lateral_offset"]) for r in log.records if r.sim_time >= 3.0]
    mean_abs = float(np.mean(late))
    speed = float(np.mean([r.ego["speed"] for r in log.records if r.sim_time >= 3.0]))
    verdict(5, mean_abs <= 0.5, f"R20 circle at {speed:.2f} m/s: mean |lateral| after 3 s = {mean_abs:.3f} m "
                                f"over {len(late)} frames (limit 0.5)")


def _fit_radius(xs, ys):
    x, y = np.asarray(xs), np.asarray(ys)
    a = np.stack([x, y, np.ones_like(x)], axis=1)
    d, e, f = np.linalg.lstsq(a, -(x ** 2 + y ** 2), rcond=None)[0]
    return math.sqrt(d * d / 4 + e * e / 4 - f)


def test_c5_constant_steer_radius(verdict):
    wb, dt, errs = 2.5, 0.01, []
    for delta in (0.1, 0.2, 0.3, 0.5):
        ego = EgoState(Pose2D(0, 0, 0), speed=5.0, wheelbase=wb)
        xs, ys = [], []
        for _ in range(5000):
            ego = ego_kinematics_step(ego, delta / 0.6, 0.0, dt)
            xs.append(ego.pose.x)
            ys.append(ego.pose.y)
        expected = wb / math.tan(delta)
        errs.append(abs(_fit_radius(xs, ys) - expected) / expected)
    verdict(5, max(errs) <= 0.01, f"constant-steer radius vs wheelbase/tan(delta): max rel error {max(errs):.2e}")


# --- 6: BEV correctness ---------------------------------------------------------

def test_c6_rasterizer_matches_oracle_and_lidar(verdict):
    rng = np.random.default_rng(2024)
    exact, lidar_ok = 0, 0
    for _ in range(100):
        w = random_scene(rng, n_agents=12, min_half=0.3)
        grid = rasterize_bev(w)
        planes = brute_force_planes(w)
        exact += all(np.array_equal(grid.channel(name), planes[name]) for name in planes)
        objects = (grid.channel("vehicles") > 0) | (grid.channel("vulnerable") > 0) | (grid.channel("static") > 0)
        lidar = grid.channel("lidar_occupancy") > 0
        lidar_ok += not (lidar & ~dilate(objects)).any()
    verdict(6, exact == 100 and lidar_ok == 100,
            f"rasterizer exact on {exact}/100 scenes, LiDAR within one cell on {lidar_ok}/100")


# --- 7: open-loop metrics -------------------------------------------------------

def test_c7_displacement_matches_naive(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        pred, gt = rng.normal(0, 10, (n, 2)), rng.normal(0, 10, (n, 2))
        r = displacement_errors(pred, gt)
        ade, fde = naive_displacement(pred.tolist(), gt.tolist())
        worst = max(worst, abs(r.ade - ade), abs(r.fde - fde))
    verdict(7, worst <= 1e-12, f"1000 random cases, max deviation from naive {worst:.1e}")


def test_c7_noise_replay_ade(verdict):
    cfg = BenchConfig()
    inputs = load_route_path(ROUTES / "long" / "loop_long.json")
    results = []
    for seed in range(3):
        log = run_episode(inputs, oracle(cfg), cfg, seed=seed).log
        planner = make_planner("oracle+noise:0.5", cfg.planner, cfg.sim, seed=seed)
        results.append(replay_open_loop(log, planner, inputs, cfg))
    m = mean_displacement(results)
    expected = 0.5 * math.sqrt(math.pi / 2)
    ok = m.n_samples >= 10_000 and abs(m.ade - expected) <= 0.05 * expected
    verdict(7, ok, f"sigma 0.5 replay ADE {m.ade:.4f} vs {expected:.4f} (5%) over {m.n_samples} frames")


# --- 8: determinism -------------------------------------------------------------

def test_c8_serial_and_parallel_runs_byte_identical(tmp_path, verdict):
    files = sorted(p for p in ROUTES.glob("*/*.json"))
    out = {}
    for name, workers in (("serial", 1), ("parallel", 2)):
        log_dir = tmp_path / name
        log_dir.mkdir()
        report, _ = run_benchmark(files, "oracle", reps=2, seed=99, mislead_rate=0.2, workers=workers,
                                  log_dir=str(log_dir))
        out[name] = (report.to_json(), {p.name: p.read_bytes() for p in sorted(log_dir.iterdir())})
    same_report = out["serial"][0] == out["parallel"][0]
    same_logs = out["serial"][1] == out["parallel"][1]
    verdict(8, same_report and same_logs,
            f"{len(files)} routes x 2 reps: reports identical {same_report}, "
            f"{len(out['serial'][1])} logs identical {same_logs}")


# --- 9: protocol constants ------------------------------------------------------

@pytest.fixture(scope="module")
def straight_episode():
    cfg = BenchConfig()
    return run_episode(straight_inputs(100.0), oracle(cfg), cfg, seed=0).log


def test_c9_logs_tick_at_ten_hertz(straight_episode, verdict):
    times = [r.sim_time for r in straight_episode.records]
    ok = straight_episode.header["dt"] == 0.1 and all(t == round(k * 0.1, 10) for k, t in enumerate(times))
    verdict(9, ok, f"control rate: dt {straight_episode.header['dt']} s, {len(times)} frames at k/10 s")


def test_c9_history_capped_at_forty(verdict):
    seen = []

    class Spy:
        privileged, needs_bev = True, True

        def __init__(self):
            self.inner = OraclePlanner()

        def plan(self, obs, world):
            seen.append(len(obs.bev_history))
            return self.inner.plan(obs, world)

    run_episode(straight_inputs(40.0), Spy(), BenchConfig(), seed=0)
    ok = PlannerConfig().history_frames == 40 and max(seen) == 40 and len(seen) > 40
    verdict(9, ok, f"observation history: max {max(seen)} frames over {len(seen)} ticks")


def test_c9_pid_integral_uses_last_twenty_errors(verdict):
    errors = list(np.random.default_rng(3).normal(0, 0.2, 80))
    cfg = PidConfig(0.5, 0.8, 0.1)
    got, _ = run_pid(cfg, errors)
    ref20 = naive_pid(0.5, 0.8, 0.1, 20, errors)
    ref21 = naive_pid(0.5, 0.8, 0.1, 21, errors)
    ok = (cfg.integral_window == 20 and np.allclose(got, ref20, atol=1e-12)
          and not np.allclose(got, ref21, atol=1e-12))
    verdict(9, ok, f"PID integral window {cfg.integral_window} samples (differs from a 21-sample window)")


def test_c9_plans_have_five_waypoints(straight_episode, verdict):
    counts = {len(r.plan) for r in straight_episode.records}
    verdict(9, counts == {PlannerConfig().n_waypoints} == {5}, f"waypoints per plan: {sorted(counts)}")


def test_c9_bucket_boundaries(verdict):
    ok = (TINY_MAX, SHORT_MAX) == (150.0, 500.0) and [bucket_of(x) for x in (149.99, 150.0, 500.0, 500.01)] == \
        ["tiny", "short", "short", "long"]
    verdict(9, ok, f"report buckets split at {TINY_MAX:g} m and {SHORT_MAX:g} m")
