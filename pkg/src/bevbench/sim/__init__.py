"""Deterministic fixed-step 2D driving world."""
from bevbench.sim.kinematics import ego_kinematics_step
from bevbench.sim.types import (
    PENALTIES,
    AgentClass,
    AgentState,
    EgoState,
    Infraction,
    InfractionKind,
    Junction,
    Keyframe,
    Lane,
    LightState,
    RoadNetwork,
    Route,
    TrafficLight,
    build_route,
)
from bevbench.sim.world import (
    Progress,
    ScenarioTrigger,
    Termination,
    WorldState,
    check_red_light,
    check_termination,
    detect_collisions,
    initial_world,
    route_progress,
    step_world,
)

__all__ = [
    "PENALTIES", "AgentClass", "AgentState", "EgoState", "Infraction", "InfractionKind",
    "Junction", "Keyframe", "Lane", "LightState", "RoadNetwork", "Route", "TrafficLight",
    "build_route", "ego_kinematics_step", "Progress", "ScenarioTrigger", "Termination",
    "WorldState", "check_red_light", "check_termination", "detect_collisions",
    "initial_world", "route_progress", "step_world",
]
