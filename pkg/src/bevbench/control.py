"""Dual PID control: waypoint plan -> steer / throttle / brake."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from bevbench.config import ControlConfig, PidConfig

if TYPE_CHECKING:
    from bevbench.planner import WaypointPlan


@dataclass(frozen=True)
class ControlSignal:
    """Actuator command. ``steer`` < 0 turns left (CARLA convention)."""

    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def __post_init__(self):
        for name in ("steer", "throttle", "brake"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite control value {name}")
        if not -1.0 <= self.steer <= 1.0:
            raise ValueError("steer out of [-1, 1]")
        if not 0.0 <= self.throttle <= 1.0 or not 0.0 <= self.brake <= 1.0:
            raise ValueError("throttle/brake out of [0, 1]")
        if self.throttle * self.brake != 0.0:
            raise ValueError("throttle and brake are mutually exclusive")

    def to_dict(self) -> dict:
        return {"steer": self.steer, "throttle": self.throttle, "brake": self.brake}


@dataclass(frozen=True)
class PidState:
    error_history: tuple[float, ...] = ()
    prev_error: float = 0.0


def pid_step(cfg: PidConfig, state: PidState, error: float, dt: float) -> tuple[float, PidState]:
    """One PID update with a bounded integral window.

    The integral term is ``ki * mean(window) * (len(window) * dt)``, i.e. the
    windowed sum of errors times ``dt``; only the last ``integral_window``
    errors (current one included) contribute.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not math.isfinite(error):
        raise ValueError("non-finite error")
    window = deque(state.error_history, maxlen=cfg.integral_window)
    window.append(error)
    integral = (sum(window) / len(window)) * (len(window) * dt)
    derivative = (error - state.prev_error) / dt
    out = cfg.kp * error + cfg.ki * integral + cfg.kd * derivative
    lo, hi = cfg.output_clamp
    out = min(hi, max(lo, out))
    return out, PidState(tuple(window), error)


@dataclass(frozen=True)
class ControllerState:
    lateral: PidState = field(default_factory=PidState)
    longitudinal: PidState = field(default_factory=PidState)


def aim_bearing(plan: "WaypointPlan", aim_index: int) -> float:
    x, y = plan.waypoints[aim_index]
    if x == 0.0 and y == 0.0:
        return 0.0
    return math.atan2(y, x)


def lateral_control(plan: "WaypointPlan", ego_speed: float, state: PidState,
                    cfg: ControlConfig | None = None, dt: float = 0.1) -> tuple[float, PidState]:
    """Steer toward the aim waypoint. Heading error is minus the aim bearing,
    so a target on the left yields negative (left) steer."""
    cfg = cfg or ControlConfig()
    error = -aim_bearing(plan, cfg.aim_index)
    out, state = pid_step(cfg.lateral, state, error, dt)
    return min(1.0, max(-1.0, out)), state


def plan_target_speed(plan: "WaypointPlan", spacing: float = 0.5) -> float:
    (x0, y0), (x1, y1) = plan.waypoints[0], plan.waypoints[1]
    return math.hypot(x1 - x0, y1 - y0) / spacing


def longitudinal_control(plan: "WaypointPlan", ego_speed: float, state: PidState,
                         cfg: ControlConfig | None = None, dt: float = 0.1):
    cfg = cfg or ControlConfig()
    target = plan_target_speed(plan, cfg.plan_spacing)
    u, state = pid_step(cfg.longitudinal, state, target - ego_speed, dt)
    throttle = brake = 0.0
    if u > 0:
        throttle = min(u, 1.0)
    elif u < -cfg.brake_deadband or (u < 0 and target < cfg.stop_speed):
        # Without drag a small negative output inside the deadband would let
        # the ego creep forever; when the plan asks to stop, brake anyway.
        brake = min(-u, 1.0)
    return throttle, brake, state


def control_step(plan: "WaypointPlan", ego_speed: float, state: ControllerState,
                 cfg: ControlConfig | None = None, dt: float = 0.1) -> tuple[ControlSignal, ControllerState]:
    steer, lat = lateral_control(plan, ego_speed, state.lateral, cfg, dt)
    throttle, brake, lon = longitudinal_control(plan, ego_speed, state.longitudinal, cfg, dt)
    return ControlSignal(steer, throttle, brake), ControllerState(lat, lon)
