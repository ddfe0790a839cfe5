"""Mobile-platform adapters: planar twist in, per-kind actuation out, plus
a small simulation step that integrates pose from the actuation state.

Supported kinds and their actuation dictionaries:

  diff-drive    left/right wheel speeds [rad/s]
  ackermann     forward speed [m/s] and front steer angle [rad]
  mecanum-omni  fl/fr/rl/rr wheel speeds [rad/s], X-roller layout
  skid-steer    left/right wheel speeds with a fixed lateral slip factor

vehicle_step applies a first-order actuator response (time constant
ACTUATION_TAU) and then integrates the body pose from the actual, not the
commanded, actuation. That makes step responses realistic enough to test
settling behavior while staying exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..errors import UnsupportedKindError

VEHICLE_KINDS = ("diff-drive", "ackermann", "mecanum-omni", "skid-steer")

ACTUATION_TAU = 0.1
DEFAULT_SLIP = 0.9


@dataclass(frozen=True)
class VehicleParams:
    kind: str
    wheel_radius: float = 0.1
    track: float = 0.4          # lateral wheel separation
    wheelbase: float = 0.3      # longitudinal axle separation
    slip: float = DEFAULT_SLIP  # skid-steer yaw efficiency

    def __post_init__(self):
        if self.kind not in VEHICLE_KINDS:
            raise UnsupportedKindError(self.kind, VEHICLE_KINDS)
        for name in ("wheel_radius", "track", "wheelbase"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.slip <= 1.0:
            raise ValueError("slip must be in (0, 1]")


@dataclass(frozen=True)
class VehicleState:
    kind: str
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    forward_speed: float = 0.0
    lateral_speed: float = 0.0
    yaw_rate: float = 0.0
    actuation: dict = field(default_factory=dict)
    t: float = 0.0

    def to_payload(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading,
                "forward_speed": self.forward_speed,
                "lateral_speed": self.lateral_speed,
                "yaw_rate": self.yaw_rate}


def initial_state(params: VehicleParams) -> VehicleState:
    zero = {key: 0.0 for key in _actuation_keys(params.kind)}
    return VehicleState(kind=params.kind, actuation=zero)


def _actuation_keys(kind: str) -> tuple[str, ...]:
    if kind in ("diff-drive", "skid-steer"):
        return ("left", "right")
    if kind == "ackermann":
        return ("speed", "steer")
    if kind == "mecanum-omni":
        return ("fl", "fr", "rl", "rr")
    raise UnsupportedKindError(kind, VEHICLE_KINDS)


def twist_to_actuation(params: VehicleParams, vx: float, vy: float,
                       wz: float) -> dict:
    """Map a planar body twist to the kind's actuation dict.

    Non-holonomic kinds ignore vy. Skid-steer divides the commanded yaw
    rate by the slip factor so the achieved rate matches the request.
    """
    r, track, wb = params.wheel_radius, params.track, params.wheelbase
    kind = params.kind
    if kind == "diff-drive":
        return {"left": (vx - wz * track / 2.0) / r,
                "right": (vx + wz * track / 2.0) / r}
    if kind == "skid-steer":
        wz_comp = wz / params.slip
        return {"left": (vx - wz_comp * track / 2.0) / r,
                "right": (vx + wz_comp * track / 2.0) / r}
    if kind == "ackermann":
        steer = math.atan(wz * wb / vx) if vx != 0.0 else 0.0
        return {"speed": vx, "steer": steer}
    if kind == "mecanum-omni":
        k = (wb + track) / 2.0
        return {"fl": (vx - vy - k * wz) / r,
                "fr": (vx + vy + k * wz) / r,
                "rl": (vx + vy - k * wz) / r,
                "rr": (vx - vy + k * wz) / r}
    raise UnsupportedKindError(kind, VEHICLE_KINDS)


def _body_velocity(params: VehicleParams, act: dict) -> tuple[float, float, float]:
    """(vx, vy, wz) the platform actually produces from its actuation."""
    r, track, wb = params.wheel_radius, params.track, params.wheelbase
    kind = params.kind
    if kind == "diff-drive":
        vx = (act["left"] + act["right"]) * r / 2.0
        wz = (act["right"] - act["left"]) * r / track
        return vx, 0.0, wz
    if kind == "skid-steer":
        vx = (act["left"] + act["right"]) * r / 2.0
        wz = params.slip * (act["right"] - act["left"]) * r / track
        return vx, 0.0, wz
    if kind == "ackermann":
        vx = act["speed"]
        wz = vx * math.tan(act["steer"]) / wb
        return vx, 0.0, wz
    if kind == "mecanum-omni":
        k = (wb + track) / 2.0
        vx = (act["fl"] + act["fr"] + act["rl"] + act["rr"]) * r / 4.0
        vy = (-act["fl"] + act["fr"] + act["rl"] - act["rr"]) * r / 4.0
        wz = (-act["fl"] + act["fr"] - act["rl"] + act["rr"]) * r / (4.0 * k)
        return vx, vy, wz
    raise UnsupportedKindError(kind, VEHICLE_KINDS)


def vehicle_step(params: VehicleParams, state: VehicleState,
                 command: dict, dt: float) -> VehicleState:
    """Advance one step: actuators chase the command with a first-order
    lag, pose integrates from the achieved body velocity."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    alpha = min(1.0, dt / ACTUATION_TAU)
    act = {key: state.actuation.get(key, 0.0)
           + (command.get(key, 0.0) - state.actuation.get(key, 0.0)) * alpha
           for key in _actuation_keys(params.kind)}
    vx, vy, wz = _body_velocity(params, act)
    cos_h, sin_h = math.cos(state.heading), math.sin(state.heading)
    return replace(
        state,
        x=state.x + (vx * cos_h - vy * sin_h) * dt,
        y=state.y + (vx * sin_h + vy * cos_h) * dt,
        heading=state.heading + wz * dt,
        forward_speed=vx,
        lateral_speed=vy,
        yaw_rate=wz,
        actuation=act,
        t=state.t + dt,
    )
