"""Closed-loop effect of planner latency on the curved routes.

Runs the oracle delayed by k frames on each route and prints mean |lateral
offset|, RC, IS and DS per k.

    python3 scripts/latency_sweep.py --ks 0 2 5 10 --routes 'routes/scenarios/circle_r20.json'
"""
import argparse
import glob

import numpy as np

from bevbench.config import BenchConfig
from bevbench.dataio import load_route_path
from bevbench.harness import run_episode
from bevbench.planner import make_planner


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--routes", default="routes/short/*.json routes/scenarios/circle_r20.json routes/tiny/junction_*.json",
                    help="space-separated globs of route files")
    ap.add_argument("--ks", type=int, nargs="+", default=[0, 1, 2, 5, 10], help="latencies in frames")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = BenchConfig()
    files = sorted({f for pattern in args.routes.split() for f in glob.glob(pattern)})
    print(f"{'route':28s} {'k':>3s} {'mean|lat|':>10s} {'RC':>7s} {'IS':>5s} {'DS':>7s}")
    for f in files:
        inputs = load_route_path(f)
        for k in args.ks:
            spec = "oracle" if k == 0 else f"oracle+latency:{k}"
            planner = make_planner(spec, cfg.planner, cfg.sim, seed=args.seed)
            result = run_episode(inputs, planner, cfg, seed=args.seed, planner_name=spec)
            lat = np.mean([abs(r.progress["lateral_offset"]) for r in result.log.records])
            s = result.score
            print(f"{inputs.route_id:28s} {k:3d} {lat:10.3f} {s.rc:7.2f} {s.is_:5.2f} {s.ds:7.2f}")


if __name__ == "__main__":
    main()
