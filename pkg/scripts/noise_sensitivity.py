"""Open-loop ADE/FDE of the noisy oracle against logged oracle drives.

For isotropic Gaussian noise of std sigma on every waypoint the expected ADE is
the Rayleigh mean sigma * sqrt(pi / 2); the script prints both side by side.

    python3 scripts/noise_sensitivity.py --sigmas 0 0.25 0.5 1.0
"""
import argparse
import math

from bevbench.config import BenchConfig
from bevbench.dataio import load_route_path, replay_open_loop
from bevbench.harness import run_episode
from bevbench.planner import OraclePlanner, make_planner
from bevbench.scoring import mean_displacement


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--route", default="routes/long/loop_long.json", help="route file to drive and replay")
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 1.0])
    ap.add_argument("--seeds", type=int, default=2, help="episodes per sigma")
    args = ap.parse_args(argv)

    cfg = BenchConfig()
    inputs = load_route_path(args.route)
    logs = [run_episode(inputs, OraclePlanner(cfg.planner, cfg.sim), cfg, seed=s).log for s in range(args.seeds)]
    print(f"{'sigma':>6s} {'ADE':>8s} {'FDE':>8s} {'Rayleigh':>9s} {'frames':>7s}")
    for sigma in args.sigmas:
        spec = "oracle" if sigma == 0 else f"oracle+noise:{sigma}"
        results = [replay_open_loop(log, make_planner(spec, cfg.planner, cfg.sim, seed=s), inputs, cfg)
                   for s, log in enumerate(logs)]
        m = mean_displacement(results)
        print(f"{sigma:6.2f} {m.ade:8.4f} {m.fde:8.4f} {sigma * math.sqrt(math.pi / 2):9.4f} {m.n_samples:7d}")


if __name__ == "__main__":
    main()
