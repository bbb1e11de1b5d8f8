"""Kinematic bicycle model for the ego vehicle."""
from __future__ import annotations

import math
from dataclasses import replace

from bevbench.geometry import Pose2D
from bevbench.sim.types import EgoState


def ego_kinematics_step(ego: EgoState, steer_cmd: float, accel: float, dt: float,
                        max_steer: float = 0.6, max_speed: float = 20.0) -> EgoState:
    """Advance the ego one explicit-Euler step.

    ``steer_cmd`` in [-1, 1] scales ``max_steer``; positive turns left
    (counterclockwise yaw). Speed is clamped to [0, max_speed], no reverse.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not (math.isfinite(steer_cmd) and math.isfinite(accel) and math.isfinite(dt)):
        raise ValueError("non-finite kinematic input")
    steer_cmd = min(1.0, max(-1.0, steer_cmd))
    steer_angle = steer_cmd * max_steer
    p = ego.pose
    v = ego.speed
    yaw = p.yaw + (v / ego.wheelbase) * math.tan(steer_angle) * dt
    x = p.x + v * math.cos(p.yaw) * dt
    y = p.y + v * math.sin(p.yaw) * dt
    speed = min(max(v + accel * dt, 0.0), max_speed)
    return replace(ego, pose=Pose2D(x, y, yaw), speed=speed, steer_angle=steer_angle)
