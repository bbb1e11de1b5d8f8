"""Benchmark metrics: infraction score, route completion, driving score, ADE/FDE."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from bevbench.sim.types import Infraction

BUCKETS = ("tiny", "short", "long")
TINY_MAX = 150.0
SHORT_MAX = 500.0


@dataclass(frozen=True)
class RouteScore:
    route_id: str
    length: float
    rc: float
    is_: float
    ds: float
    infractions: tuple[Infraction, ...] = ()
    termination: str = "success"

    def to_dict(self) -> dict:
        return {
            "route_id": self.route_id, "length": self.length, "rc": self.rc, "is": self.is_,
            "ds": self.ds, "infractions": [i.to_dict() for i in self.infractions],
            "termination": self.termination,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RouteScore":
        return cls(d["route_id"], float(d["length"]), float(d["rc"]), float(d["is"]), float(d["ds"]),
                   tuple(Infraction.from_dict(i) for i in d["infractions"]), d["termination"])


def infraction_score(infractions) -> float:
    score = 1.0
    for inf in infractions:
        score *= inf.penalty
    return score


def driving_score(rc: float, is_: float) -> float:
    if not 0.0 <= rc <= 100.0:
        raise ValueError("rc must be a percentage in [0, 100]")
    if not 0.0 <= is_ <= 1.0:
        raise ValueError("is must be in [0, 1]")
    return rc * is_


def route_score(route_id: str, length: float, completion_fraction: float, infractions,
                termination: str) -> RouteScore:
    rc = 100.0 * min(1.0, max(0.0, completion_fraction))
    is_ = infraction_score(infractions)
    return RouteScore(route_id, length, rc, is_, driving_score(rc, is_), tuple(infractions), termination)


def bucket_of(length: float) -> str:
    if length < TINY_MAX:
        return "tiny"
    if length <= SHORT_MAX:
        return "short"
    return "long"


@dataclass(frozen=True)
class DisplacementResult:
    ade: float
    fde: float
    n_samples: int = 1


def displacement_errors(pred, gt) -> DisplacementResult:
    """Mean and final L2 error between matched waypoint sequences."""
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 2 or len(p) == 0:
        raise ValueError(f"waypoint arrays must have equal shape (N, 2), got {p.shape} vs {g.shape}")
    d = np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])
    return DisplacementResult(float(d.mean()), float(d[-1]), 1)


def mean_displacement(results) -> DisplacementResult:
    results = list(results)
    if not results:
        return DisplacementResult(math.nan, math.nan, 0)
    n = sum(r.n_samples for r in results)
    ade = sum(r.ade * r.n_samples for r in results) / n
    fde = sum(r.fde * r.n_samples for r in results) / n
    return DisplacementResult(ade, fde, n)


@dataclass
class BenchmarkReport:
    buckets: dict
    repetitions: int
    per_route: list = field(default_factory=list)  # [[RouteScore] per rep] per route

    def to_dict(self) -> dict:
        return {
            "buckets": self.buckets,
            "repetitions": self.repetitions,
            "per_route": [[s.to_dict() for s in reps] for reps in self.per_route],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkReport":
        return cls(d["buckets"], d["repetitions"],
                   [[RouteScore.from_dict(s) for s in reps] for reps in d["per_route"]])

    def table(self) -> str:
        lines = [f"{'bucket':<8} {'routes':>6} {'DS':>7} {'RC':>7} {'IS':>6}"]
        for name in BUCKETS:
            b = self.buckets.get(name)
            if b is None:
                continue
            lines.append(f"{name:<8} {b['routes']:>6d} {b['ds']:>7.1f} {b['rc']:>7.1f} {b['is']:>6.2f}")
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["route_id", "rep", "length", "bucket", "rc", "is", "ds", "n_infractions", "termination"])
        for reps in self.per_route:
            for k, s in enumerate(reps):
                w.writerow([s.route_id, k, repr(s.length), bucket_of(s.length), repr(s.rc), repr(s.is_),
                            repr(s.ds), len(s.infractions), s.termination])
        return buf.getvalue()


def aggregate(results) -> BenchmarkReport:
    """Bucket means over routes x repetitions; DS is averaged per route, never
    recomposed from mean RC and mean IS."""
    results = [list(r) for r in results]
    if not results or not all(results):
        raise ValueError("aggregate needs at least one route with at least one repetition")
    reps = len(results[0])
    if any(len(r) != reps for r in results):
        raise ValueError("every route needs the same number of repetitions")
    grouped: dict[str, list[RouteScore]] = {}
    routes: dict[str, int] = {}
    for r in results:
        b = bucket_of(r[0].length)
        grouped.setdefault(b, []).extend(r)
        routes[b] = routes.get(b, 0) + 1
    buckets = {}
    for name in BUCKETS:
        if name not in grouped:
            continue
        scores = grouped[name]
        n = len(scores)
        buckets[name] = {
            "ds": round(sum(s.ds for s in scores) / n, 1),
            "rc": round(sum(s.rc for s in scores) / n, 1),
            "is": round(sum(s.is_ for s in scores) / n, 2),
            "routes": routes[name],
        }
    return BenchmarkReport(buckets, reps, results)
