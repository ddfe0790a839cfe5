"""Simulated platform: one node owns the vehicles, the arm, the scene
object, and the simulation clock.

Everything downstream observes the world through topics, never through
shared objects:

  /world/clock     world/Clock       every tick
  /world/vehicles  world/Fleet       every tick
  /joint_states    sensor/JointState every tick
  /world/arm       world/ArmStatus   every tick (ground truth + grasp flag)

and commands it back through /cmd_vel (geometry/Twist, fanned out to the
whole fleet) and /joint_cmd (arm/JointCommand, zero-order hold). The node
also serves /arm/solve_ik against the live chain.

realtime_factor paces sim time against the wall clock; 0 runs free. Free
runs still yield the interpreter periodically so consumer threads keep up.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import asset_path
from .errors import ConfigError
from .kinematics import IkParams, Pose, ik_solve, parse_urdf
from .runtime import NodeContext
from .transforms import quat_normalize
from .wrappers.arm import SimArmAdapter
from .wrappers.vehicles import (VehicleParams, initial_state,
                                twist_to_actuation, vehicle_step)

DEFAULT_ARM_HOME = (0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785)


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: str
    kind: str
    wheel_radius: float = 0.1
    track: float = 0.4
    wheelbase: float = 0.3
    slip: float = 0.9

    def params(self) -> VehicleParams:
        return VehicleParams(self.kind, self.wheel_radius, self.track,
                             self.wheelbase, self.slip)


DEFAULT_VEHICLES = (
    VehicleSpec("diffbot", "diff-drive"),
    VehicleSpec("ackbot", "ackermann"),
    VehicleSpec("mecabot", "mecanum-omni"),
    VehicleSpec("skidbot", "skid-steer"),
)


@dataclass(frozen=True)
class SceneConfig:
    """Everything the simulated platform and its capability nodes need.

    The seed derives reproducible per-run jitter: object x/y moves up to
    5 cm, the arm home up to 0.1 rad per joint.
    """

    seed: int = 0
    rate_hz: float = 100.0
    realtime_factor: float = 0.0
    vehicles: tuple = DEFAULT_VEHICLES
    arm_urdf: str = "panda.urdf"
    arm_home: tuple = DEFAULT_ARM_HOME
    attach_radius: float = 0.02
    gripper_threshold: float = 0.5
    object_position: tuple = (0.45, 0.1, 0.05)
    camera: dict = field(default_factory=lambda: {
        "width": 64, "height": 64,
        "viewport_center": (0.4, 0.0),
        "meters_per_pixel": 0.008,
        "rate_hz": 20.0,
    })
    policy: dict = field(default_factory=lambda: {
        "step": 0.02, "grasp_radius": 0.02,
    })
    orchestration: dict = field(default_factory=lambda: {
        "defaults": {"camera_id": "synthetic0",
                     "model_id": "scripted_grasp",
                     "backend_id": "reference"},
        "aliases": {"realsense": "synthetic0",
                    "openvla": ["scripted_grasp", "reference"]},
        "settle_s": 1.0,
    })

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ConfigError("rate_hz must be positive")
        if self.realtime_factor < 0:
            raise ConfigError("realtime_factor must be >= 0")

    @classmethod
    def from_dict(cls, data: dict | None) -> "SceneConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
        if "vehicles" in data:
            data["vehicles"] = tuple(
                v if isinstance(v, VehicleSpec) else VehicleSpec(**v)
                for v in data["vehicles"])
        for key in ("arm_home", "object_position"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        base = cls()
        for key in ("camera", "policy", "orchestration"):
            if key in data:
                merged = dict(getattr(base, key))
                merged.update(data[key])
                data[key] = merged
        return replace(base, **data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["vehicles"] = [asdict(v) for v in self.vehicles]
        return out

    def urdf_path(self) -> Path:
        direct = Path(self.arm_urdf)
        if direct.exists():
            return direct
        packaged = asset_path("urdf", self.arm_urdf)
        if packaged.is_file():
            return Path(str(packaged))
        raise ConfigError(f"urdf not found: {self.arm_urdf}")

    def seeded(self) -> tuple[np.ndarray, np.ndarray]:
        """(arm home, object position) with the seed's jitter applied."""
        rng = np.random.default_rng(self.seed)
        home = np.asarray(self.arm_home, float) + rng.uniform(
            -0.1, 0.1, len(self.arm_home))
        obj = np.asarray(self.object_position, float).copy()
        obj[:2] += rng.uniform(-0.05, 0.05, 2)
        return home, obj


def load_scene(path=None) -> SceneConfig:
    """Scene from a YAML file; None loads the packaged default."""
    import yaml

    if path is None:
        text = asset_path("configs", "scene_default.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read scene file {path}: {e}") from e
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"bad scene YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("scene file must hold a mapping")
    return SceneConfig.from_dict(data)


def _point(p) -> dict:
    return {"x": float(p[0]), "y": float(p[1]), "z": float(p[2])}


def world_node(ctx: NodeContext) -> None:
    scene = SceneConfig.from_dict(ctx.params.get("scene"))
    chain = parse_urdf(scene.urdf_path().read_text())
    home, object_position = scene.seeded()
    arm = SimArmAdapter(chain, home, object_position,
                        attach_radius=scene.attach_radius,
                        gripper_threshold=scene.gripper_threshold)
    vparams = {v.vehicle_id: v.params() for v in scene.vehicles}
    vstates = {vid: initial_state(p) for vid, p in vparams.items()}

    bus, owner = ctx.bus, ctx.node_id
    bus.advertise("/world/clock", "world/Clock", owner)
    bus.advertise("/world/vehicles", "world/Fleet", owner)
    bus.advertise("/joint_states", "sensor/JointState", owner)
    bus.advertise("/world/arm", "world/ArmStatus", owner)
    # intake topics are declared by their consumer so publishers can bind
    # to them lazily
    bus.advertise("/cmd_vel", "geometry/Twist", owner)
    bus.advertise("/joint_cmd", "arm/JointCommand", owner)

    def solve_ik(request: dict) -> dict:
        target = request["target"]
        pos = np.array([target["position"][k] for k in ("x", "y", "z")])
        q_t = quat_normalize(np.array(
            [target["orientation"][k] for k in ("w", "x", "y", "z")]))
        seed = np.asarray(request.get("seed") or arm.q, float)
        result = ik_solve(chain, seed, Pose(pos, q_t), IkParams())
        return {
            "converged": result.converged,
            "joint_positions": [float(v) for v in result.q],
            "iterations": result.iterations,
            "position_residual": result.pos_residual,
            "orientation_residual": result.rot_residual,
        }

    bus.advertise_service("/arm/solve_ik", "arm/SolveIk", solve_ik, owner)

    cmd_sub = bus.subscribe("/cmd_vel")
    joint_sub = bus.subscribe("/joint_cmd")
    joint_names = chain.joint_names

    dt = 1.0 / scene.rate_hz
    sim_time = 0.0
    twist = (0.0, 0.0, 0.0)
    jcmd_v = np.zeros(chain.dof)
    jcmd_g = 0.0
    tick = 0
    next_wall = time.monotonic()

    while not ctx.stopped:
        for env in cmd_sub.drain():
            lin, ang = env.payload["linear"], env.payload["angular"]
            twist = (lin["x"], lin["y"], ang["z"])
        for env in joint_sub.drain():
            v = env.payload["velocity"]
            if len(v) == chain.dof:  # ignore commands for a different chain
                jcmd_v = np.asarray(v, float)
                jcmd_g = float(env.payload["gripper"])

        for vid, params in vparams.items():
            command = twist_to_actuation(params, *twist)
            vstates[vid] = vehicle_step(params, vstates[vid], command, dt)
        arm.apply(jcmd_v, jcmd_g, dt)
        sim_time += dt
        tick += 1

        bus.publish("/world/clock", {"sim_time": sim_time})
        bus.publish("/world/vehicles", {
            "sim_time": sim_time,
            "vehicles": [{
                "vehicle_id": vid,
                "base_kind": st.kind,
                "pose": {"x": st.x, "y": st.y, "theta": st.heading},
                "forward_speed": st.forward_speed,
                "lateral_speed": st.lateral_speed,
                "yaw_rate": st.yaw_rate,
            } for vid, st in vstates.items()],
        })
        bus.publish("/joint_states", {
            "sim_time": sim_time,
            "name": joint_names,
            "position": [float(v) for v in arm.q],
            "velocity": [float(v) for v in arm.qdot],
        })
        bus.publish("/world/arm", {
            "sim_time": sim_time,
            "grasped": arm.attached,
            "object_position": _point(arm.object_position),
            "tip_position": _point(arm.tip_position()),
            "commanded_speed": float(np.linalg.norm(jcmd_v)),
        })

        if scene.realtime_factor > 0:
            next_wall += dt / scene.realtime_factor
            delay = next_wall - time.monotonic()
            if delay > 0:
                ctx.stop_event.wait(delay)
        elif tick % 16 == 0:
            time.sleep(0)  # free-run: let consumer threads catch up
