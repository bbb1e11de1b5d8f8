"""Generate the shipped route files under routes/.

    python scripts/make_routes.py [--out routes]

Output is deterministic; rerunning rewrites identical files.
"""
import argparse
import json
import math
from pathlib import Path

LANE_WIDTH = 3.5


def line(p0, p1, step=5.0):
    n = max(1, math.ceil(math.dist(p0, p1) / step))
    return [[round(p0[0] + (p1[0] - p0[0]) * k / n, 6), round(p0[1] + (p1[1] - p0[1]) * k / n, 6)]
            for k in range(n + 1)]


def arc(center, radius, a0, a1, step_deg=3.0):
    n = max(2, math.ceil(abs(math.degrees(a1 - a0)) / step_deg))
    return [[round(center[0] + radius * math.cos(a0 + (a1 - a0) * k / n), 6),
             round(center[1] + radius * math.sin(a0 + (a1 - a0) * k / n), 6)] for k in range(n + 1)]


def lane(lid, pts, successors=(), left=None, right=None, in_junction=False):
    d = {"id": lid, "centerline": pts, "width": LANE_WIDTH, "successors": list(successors)}
    if left:
        d["left_neighbor"] = left
    if right:
        d["right_neighbor"] = right
    if in_junction:
        d["in_junction"] = True
    return d


def doc(route_id, lanes, sequence, junctions=(), lights=(), agents=(), triggers=(), seed=0):
    return {
        "version": 1, "route_id": route_id, "town_id": "synthetic", "scenario_seed": seed,
        "lanes": lanes, "junctions": list(junctions), "lights": list(lights),
        "agents": list(agents), "triggers": list(triggers), "route": {"lane_sequence": list(sequence)},
    }


def junction_network(incoming_len=60.0, out_len=50.0):
    """A three-branch junction at the end of an eastbound lane."""
    x0 = incoming_len
    rl, rr = 10.0, 7.0
    lanes = [
        lane("in", line((0.0, 0.0), (x0, 0.0)), ["c_left", "c_right", "c_straight"]),
        lane("c_left", arc((x0, rl), rl, -math.pi / 2, 0.0), ["out_left"], in_junction=True),
        lane("c_right", arc((x0, -rr), rr, math.pi / 2, 0.0), ["out_right"], in_junction=True),
        lane("c_straight", line((x0, 0.0), (x0 + 20.0, 0.0)), ["out_straight"], in_junction=True),
        lane("out_left", line((x0 + rl, rl), (x0 + rl, rl + out_len))),
        lane("out_right", line((x0 + rr, -rr), (x0 + rr, -rr - out_len))),
        lane("out_straight", line((x0 + 20.0, 0.0), (x0 + 20.0 + out_len, 0.0))),
    ]
    junctions = [{"id": "j0", "incoming": ["in"],
                  "branches": {"left": "c_left", "right": "c_right", "straight": "c_straight"}}]
    return lanes, junctions


def straight(route_id, length, **kw):
    return doc(route_id, [lane("l0", line((0.0, 0.0), (length, 0.0)))], ["l0"], **kw)


def routes():
    out = {}
    out["straight_100m.json"] = straight("straight_100m", 100.0)

    jl, jj = junction_network()
    out["tiny/straight_100m.json"] = straight("straight_100m", 100.0)
    out["tiny/junction_left.json"] = doc("junction_left", jl, ["in", "c_left", "out_left"], jj)
    out["tiny/junction_right.json"] = doc("junction_right", jl, ["in", "c_right", "out_right"], jj)
    out["tiny/lane_change_left.json"] = doc("lane_change_left", [
        lane("l0", line((0.0, 0.0), (130.0, 0.0)), left="l1"),
        lane("l1", line((0.0, LANE_WIDTH), (130.0, LANE_WIDTH)), right="l0"),
    ], ["l0", "l1"])
    # green for the first 6 s, then yellow 2 s, red 8 s: the ego meets the red.
    out["tiny/junction_straight_light.json"] = doc(
        "junction_straight_light", jl, ["in", "c_straight", "out_straight"], jj,
        lights=[{"id": "tl0", "stop_line": [[60.0, -1.75], [60.0, 1.75]], "controlled_lane": "in",
                 "phase_durations": {"green": 6.0, "yellow": 2.0, "red": 8.0}, "phase_offset": 0.0}])

    out["scenarios/pedestrian_crossing.json"] = straight(
        "pedestrian_crossing", 120.0,
        triggers=[{"id": "t0", "trigger_position": 40.0, "spawn": {
            "id": "ped0", "class": "pedestrian", "pose": {"x": 42.5, "y": 0.0, "yaw": -math.pi / 2},
            "half_extents": [0.4, 0.4],
            "script": [{"t": 2.5, "pose": {"x": 42.5, "y": -5.0, "yaw": -math.pi / 2}}]}}])
    out["scenarios/red_light_straight.json"] = straight(
        "red_light_straight", 120.0,
        lights=[{"id": "tl0", "stop_line": [[60.0, -1.75], [60.0, 1.75]], "controlled_lane": "l0",
                 "phase_durations": {"green": 1.0, "yellow": 1.0, "red": 1000.0}, "phase_offset": 2.0}])
    out["scenarios/circle_r20.json"] = doc(
        "circle_r20", [lane("ring", arc((0.0, 20.0), 20.0, -math.pi / 2, -math.pi / 2 + 1.9 * math.pi, 1.0))],
        ["ring"])

    out["short/s_curve.json"] = doc("s_curve", [
        lane("a", line((0.0, 0.0), (80.0, 0.0)), ["b"]),
        lane("b", arc((80.0, 40.0), 40.0, -math.pi / 2, 0.0), ["c"]),
        lane("c", arc((160.0, 40.0), 40.0, math.pi, math.pi / 2, ), ["d"]),
        lane("d", line((160.0, 80.0), (260.0, 80.0))),
    ], ["a", "b", "c", "d"])

    # long loop: straights joined by R=50 corners, open at the start
    r = 50.0
    long_lanes = [
        lane("e0", line((0.0, 0.0), (600.0, 0.0)), ["k0"]),
        lane("k0", arc((600.0, r), r, -math.pi / 2, 0.0), ["n0"]),
        lane("n0", line((600.0 + r, r), (600.0 + r, 400.0 + r)), ["k1"]),
        lane("k1", arc((600.0, 400.0 + r), r, 0.0, math.pi / 2), ["w0"]),
        lane("w0", line((600.0, 400.0 + 2 * r), (0.0, 400.0 + 2 * r)), ["k2"]),
        lane("k2", arc((0.0, 400.0 + r), r, math.pi / 2, math.pi), ["s0"]),
        lane("s0", line((-r, 400.0 + r), (-r, 60.0))),
    ]
    out["long/loop_long.json"] = doc("loop_long", long_lanes, [ln["id"] for ln in long_lanes])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "routes"))
    args = ap.parse_args()
    root = Path(args.out)
    for rel, d in routes().items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(d, indent=1) + "\n")
        print(path)


if __name__ == "__main__":
    main()
