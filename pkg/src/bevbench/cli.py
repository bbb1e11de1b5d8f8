"""Command-line entry point: ``bevbench {run,gen-dataset,render,replay-eval,report}``.

Exit codes: 0 success, 1 usage / input errors, 2 when an episode crashed.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from pathlib import Path

from bevbench.config import BenchConfig, config_hash, load_config_text, load_default_config
from bevbench.dataio import (
    LogFormatError,
    RouteFileError,
    load_route_path,
    plan_spaced_targets,
    read_log,
    replay_open_loop,
)
from bevbench.harness import default_workers, replay_worlds, run_benchmark
from bevbench.planner import make_planner, parse_planner_spec
from bevbench.scoring import BenchmarkReport, RouteScore, aggregate, mean_displacement
from bevbench.sensors import render_bev_png

EXIT_OK, EXIT_USAGE, EXIT_CRASH = 0, 1, 2
SEED_ENV = "BEVBENCH_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments; 2 is reserved for episode crashes here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- shared helpers ---------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(args) -> BenchConfig:
    if getattr(args, "config", None):
        try:
            cfg = load_config_text(Path(args.config).read_text("utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    else:
        cfg = load_default_config()
    overrides = {}
    for item in getattr(args, "set", None) or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = _parse_value(value)
    named = {
        "bev_size": ("sensor.height_cells", "sensor.width_cells"),
        "bev_resolution": ("sensor.resolution",),
        "ray_count": ("sensor.ray_count",),
        "cruise_speed": ("planner.cruise_speed",),
        "integral_window": ("control.lateral.integral_window", "control.longitudinal.integral_window"),
    }
    for attr, keys in named.items():
        value = getattr(args, attr, None)
        if value is not None:
            for key in keys:
                overrides[key] = value
    try:
        return cfg.with_overrides(overrides) if overrides else cfg
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad config override: {exc}") from None


def resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def expand_glob(pattern: str, what: str) -> list[str]:
    files = sorted(glob.glob(pattern, recursive=True))
    if not files:
        raise UsageError(f"no {what} match {pattern!r}")
    return files


def _check_unique_route_ids(files) -> None:
    seen = {}
    for f in files:
        try:
            rid = load_route_path(f).route_id
        except (RouteFileError, OSError) as exc:
            raise UsageError(f"{f}: {exc}") from None
        if rid in seen:
            raise UsageError(f"route id {rid!r} appears in both {seen[rid]} and {f}")
        seen[rid] = f


def _write_report(report: BenchmarkReport, out: Path) -> None:
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.table())
    (out / "report.csv").write_text(report.csv())


def _benchmark(args, planner_spec: str, with_bev: bool) -> tuple[int, list]:
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    if not 0.0 <= args.mislead_rate <= 1.0:
        raise UsageError("--mislead-rate must be within [0, 1]")
    if args.workers is not None and args.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        parse_planner_spec(planner_spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if planner_spec.startswith("echo-gt"):
        raise UsageError("echo-gt needs logged ground truth; use it with replay-eval")
    cfg = build_config(args)
    files = expand_glob(args.routes, "route files")
    _check_unique_route_ids(files)
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    log_dir = out / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    bev_dir = None
    if with_bev:
        bev_dir = out / "bev"
        bev_dir.mkdir(parents=True, exist_ok=True)
    report, outcomes = run_benchmark(files, planner_spec, args.reps, seed, args.mislead_rate, cfg,
                                     args.workers, str(log_dir), str(bev_dir) if bev_dir else None)
    crashed = [o for o in outcomes if o.error is not None]
    for o in crashed:
        print(f"episode crashed: {o.job.route_file} rep {o.job.rep}: {o.error}", file=sys.stderr)
    if report is not None:
        _write_report(report, out)
        print(report.table(), end="")
    return (EXIT_CRASH if crashed else EXIT_OK), outcomes


# --- subcommands ------------------------------------------------------------

def cmd_run(args) -> int:
    code, _ = _benchmark(args, args.planner, with_bev=False)
    return code


def cmd_gen_dataset(args) -> int:
    code, outcomes = _benchmark(args, args.planner, with_bev=True)
    done = [o for o in outcomes if o.error is None]
    print(f"sequences: {len(done)}  frames: {sum(o.frames for o in done)}")
    return code


def _load_log(path: str):
    try:
        return read_log(Path(path).read_bytes())
    except (OSError, LogFormatError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read log {path}: {exc}") from None


def _route_for(log, path: str, override: str | None):
    route_file = override or log.header.get("route_file")
    if not route_file:
        raise UsageError(f"{path}: header names no route file; pass --route")
    try:
        return load_route_path(route_file)
    except (OSError, RouteFileError) as exc:
        raise UsageError(f"{path}: cannot load route {route_file}: {exc}") from None


def _parse_range(text: str | None, n: int) -> tuple[int, int]:
    if text is None:
        return 0, n
    lo, sep, hi = text.partition(":")
    if not sep:
        raise UsageError("--frames expects START:END")
    try:
        a = int(lo) if lo else 0
        b = int(hi) if hi else n
    except ValueError:
        raise UsageError(f"bad frame range {text!r}") from None
    if a < 0 or b > n or a > b:
        raise UsageError(f"frame range {a}:{b} outside the episode's 0:{n}")
    return a, b


def _check_hash(log, cfg, path) -> None:
    logged = log.header.get("config_hash")
    if logged != config_hash(cfg):
        raise UsageError(f"{path}: config hash {logged} does not match the current config "
                         f"({config_hash(cfg)}); pass the producing --config")


def render_trajectory(inputs, poses, size: int = 800) -> bytes:
    """Top-down overlay: lanes (grey), route (blue), ego trajectory (red)."""
    import io

    import numpy as np
    from PIL import Image, ImageDraw

    lanes = [ln.centerline.points for ln in inputs.network.lanes.values()]
    pts = np.concatenate(lanes + [np.asarray(poses, dtype=float).reshape(-1, 2)])
    lo = pts.min(axis=0) - 5.0
    span = float(max(pts.max(axis=0) - lo + 5.0))
    scale = (size - 1) / span

    def px(p):
        return (float((p[0] - lo[0]) * scale), float((size - 1) - (p[1] - lo[1]) * scale))

    img = Image.new("RGB", (size, size), (250, 250, 250))
    draw = ImageDraw.Draw(img)
    for ln in inputs.network.lanes.values():
        w = max(1, int(round(ln.width * scale)))
        draw.line([px(p) for p in ln.centerline.points], fill=(205, 205, 205), width=w)
    draw.line([px(p) for p in inputs.route.reference_path.points], fill=(60, 110, 220), width=2)
    if len(poses) > 1:
        draw.line([px(p) for p in poses], fill=(220, 40, 40), width=2)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def cmd_render(args) -> int:
    log = _load_log(args.log)
    cfg = build_config(args)
    _check_hash(log, cfg, args.log)
    inputs = _route_for(log, args.log, args.route)
    a, b = _parse_range(args.frames, len(log.records))
    if a == b:
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from bevbench.sensors import rasterize_bev

    for record, world, _ in replay_worlds(log, inputs, cfg, needs_bev=False):
        if record.frame >= b:
            break
        if record.frame >= a:
            grid = rasterize_bev(world, cfg.sensor)
            (out / f"frame_{record.frame:06d}.png").write_bytes(render_bev_png(grid, args.scale))
    poses = [(r.ego["x"], r.ego["y"]) for r in log.records[a:b]]
    (out / "trajectory.png").write_bytes(render_trajectory(inputs, poses))
    print(f"rendered {b - a} frames to {out}")
    return EXIT_OK


def cmd_replay_eval(args) -> int:
    try:
        chain = parse_planner_spec(args.planner)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = build_config(args)
    paths = expand_glob(args.logs, "logs")
    logs = [(p, _load_log(p)) for p in paths]
    for p, log in logs:
        _check_hash(log, cfg, p)
    rows = {}
    results = []
    for p, log in logs:
        inputs = _route_for(log, p, args.route)
        echo = plan_spaced_targets(log) if chain[0][0] == "echo-gt" else None
        seed = int(log.header.get("seed", 0)) if args.seed is None else args.seed
        planner = make_planner(args.planner, cfg.planner, cfg.sim, seed=seed, echo_targets=echo)
        try:
            res = replay_open_loop(log, planner, inputs, cfg)
        except RuntimeError as exc:
            raise UsageError(f"{p}: {exc}") from None
        rows[p] = {"ade": res.ade, "fde": res.fde, "n_samples": res.n_samples}
        results.append(res)
        print(f"{p}  ADE {res.ade:.4f}  FDE {res.fde:.4f}  n {res.n_samples}")
    overall = mean_displacement([r for r in results if r.n_samples > 0])
    print(f"overall  ADE {overall.ade:.4f}  FDE {overall.fde:.4f}  n {overall.n_samples}")
    doc = {"planner": args.planner, "logs": rows,
           "overall": {"ade": overall.ade, "fde": overall.fde, "n_samples": overall.n_samples}}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.logs)
    pattern = str(src / "**" / "*.jsonl") if src.is_dir() else args.logs
    paths = expand_glob(pattern, "logs")
    by_route: dict[str, dict[int, RouteScore]] = {}
    for p in paths:
        log = _load_log(p)
        if log.result is None:
            raise UsageError(f"{p}: log carries no result")
        rep = int(log.header.get("rep", 0))
        by_route.setdefault(log.header["route_id"], {})[rep] = log.result
    reps = {len(v) for v in by_route.values()}
    if len(reps) != 1:
        raise UsageError("logs hold unequal repetition counts per route")
    results = [[by_route[rid][k] for k in sorted(by_route[rid])] for rid in sorted(by_route)]
    report = aggregate(results)
    out = Path(args.out) if args.out else (src if src.is_dir() else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    _write_report(report, out)
    print(report.table(), end="")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _add_config_flags(p) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file (defaults: the shipped default_config.json)")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one config value by dotted key, e.g. control.lateral.kp=1.0 (repeatable)")
    p.add_argument("--bev-size", type=int, metavar="CELLS", help="BEV grid height and width in cells (default 200)")
    p.add_argument("--bev-resolution", type=float, metavar="M", help="BEV cell size in meters (default 0.5)")
    p.add_argument("--ray-count", type=int, metavar="N", help="LiDAR rays per sweep (default 720)")
    p.add_argument("--cruise-speed", type=float, metavar="MPS", help="oracle cruise speed in m/s (default 6)")
    p.add_argument("--integral-window", type=int, metavar="N",
                   help="PID integral window in samples for both controllers (default 20)")


def _add_bench_flags(p, default_planner: str) -> None:
    p.add_argument("--routes", required=True, metavar="GLOB", help="route JSON files, e.g. 'routes/tiny/*.json'")
    p.add_argument("--planner", default=default_planner, metavar="SPEC",
                   help="planner spec: oracle, oracle+noise:SIGMA, oracle+latency:K (default %(default)s)")
    p.add_argument("--reps", type=int, default=3, metavar="N", help="repetitions per route (default 3)")
    p.add_argument("--mislead-rate", type=float, default=0.2, metavar="P",
                   help="probability of a misleading instruction per gap (default 0.2)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"base seed (default: ${SEED_ENV}, else 0)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help=f"parallel episode workers (default: CPU count, here {default_workers()})")
    _add_config_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bevbench", description="Closed-loop BEV driving benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a benchmark: routes x reps episodes, logs and report",
                       description="Run routes x reps closed-loop episodes and write logs/ and report.{json,txt,csv}.")
    _add_bench_flags(p, "oracle")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-dataset", help="generate 10 Hz episode logs plus per-frame BEV dumps",
                       description="Drive routes with the oracle, writing logs/ and bev/<episode>/<frame>.bevg.")
    _add_bench_flags(p, "oracle")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("render", help="render BEV frames and a trajectory overlay from a log",
                       description="Re-simulate a logged episode and write one PNG per frame plus trajectory.png.")
    p.add_argument("log", help="episode log (.jsonl)")
    p.add_argument("--frames", metavar="START:END", help="half-open frame range (default: whole episode)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory for PNGs")
    p.add_argument("--route", metavar="PATH", help="route file (default: the one named in the log header)")
    p.add_argument("--scale", type=int, default=2, help="pixels per BEV cell (default 2)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("replay-eval", help="open-loop ADE/FDE of a planner against logged ground truth",
                       description="Replay logs, query a planner per frame and report ADE/FDE.")
    p.add_argument("--logs", required=True, metavar="GLOB", help="episode logs, e.g. 'out/logs/*.jsonl'")
    p.add_argument("--planner", default="oracle", metavar="SPEC",
                   help="planner spec: oracle[+noise:SIGMA][+latency:K] or echo-gt (default %(default)s)")
    p.add_argument("--seed", type=int, default=None, help="noise seed (default: each log's episode seed)")
    p.add_argument("--route", metavar="PATH", help="route file for every log (default: from log headers)")
    p.add_argument("--out", default="replay_eval.json", metavar="PATH", help="JSON results (default %(default)s)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_replay_eval)

    p = sub.add_parser("report", help="re-aggregate a report from episode logs",
                       description="Rebuild report.{json,txt,csv} from the results stored in log headers.")
    p.add_argument("logs", help="directory of .jsonl logs (searched recursively) or a glob")
    p.add_argument("--out", metavar="DIR", help="where to write the report (default: the log directory)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bevbench {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
