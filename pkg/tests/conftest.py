"""Shared builders for small worlds and the shipped route assets."""
import importlib.util
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from bevbench.config import BenchConfig
from bevbench.dataio import load_route_file, load_route_path
from bevbench.geometry import Polyline, Pose2D
from bevbench.sim.types import AgentClass, AgentState, Lane, RoadNetwork, build_route
from bevbench.sim.world import initial_world

ROOT = Path(__file__).resolve().parents[1]
ROUTES = ROOT / "routes"
TINY_ROUTES = sorted((ROUTES / "tiny").glob("*.json"))

_spec = importlib.util.spec_from_file_location("make_routes", ROOT / "scripts" / "make_routes.py")
make_routes = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(make_routes)


def inputs_from_doc(doc):
    return load_route_file(json.dumps(doc))


def junction_inputs(branch="left", incoming_len=60.0, **kw):
    lanes, junctions = make_routes.junction_network(incoming_len)
    seq = ["in", f"c_{branch}", f"out_{branch}"]
    return inputs_from_doc(make_routes.doc(f"junction_{branch}", lanes, seq, junctions, **kw))


def straight_inputs(length=100.0, route_id=None, **kw):
    return inputs_from_doc(make_routes.straight(route_id or f"straight_{int(length)}m", length, **kw))


def straight_network(length=100.0, width=3.5, with_left=False):
    lanes = {"l0": Lane("l0", Polyline([[0.0, 0.0], [length, 0.0]]), width,
                        left_neighbor="l1" if with_left else None)}
    if with_left:
        lanes["l1"] = Lane("l1", Polyline([[0.0, width], [length, width]]), width, right_neighbor="l0")
    return RoadNetwork(lanes)


def straight_world(length=100.0, agents=(), lights=(), triggers=(), ego_pose=None, speed=0.0):
    net = straight_network(length)
    route = build_route(net, ["l0"])
    world = initial_world(net, route, lights, triggers, agents)
    if ego_pose is not None or speed:
        ego = replace(world.ego, pose=ego_pose or world.ego.pose, speed=speed)
        world = replace(world, ego=ego)
    return world


def agent(aid, cls, x, y, yaw=0.0, half=(0.4, 0.4), script=()):
    return AgentState(aid, AgentClass(cls), Pose2D(x, y, yaw), tuple(half), 0.0, tuple(script))


def circle_points(radius, center=(0.0, 0.0), start=-math.pi / 2, sweep=1.9 * math.pi, n=400):
    a = start + sweep * np.arange(n + 1) / n
    return np.stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)], axis=1)


@pytest.fixture
def cfg():
    return BenchConfig()


@pytest.fixture(scope="session")
def route_inputs():
    cache = {}

    def load(rel):
        if rel not in cache:
            cache[rel] = load_route_path(ROUTES / rel)
        return cache[rel]

    return load
