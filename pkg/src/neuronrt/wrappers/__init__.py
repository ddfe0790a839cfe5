"""Hardware-shaped capability wrappers: camera, action model, vehicle and
arm adapters, and the backend benchmark."""

from .arm import SimArmAdapter
from .bench import BenchReport, BenchRow, benchmark, default_frame_source
from .camera import (DEFAULT_METERS_PER_PIXEL, DEFAULT_VIEWPORT_CENTER,
                     CameraWrapper, Frame, SyntheticCamera, decode_scene,
                     render_scene)
from .models import (BackendInfo, BackendRegistry, ModelWrapper,
                     ScriptedGraspPolicy, default_registry)
from .vehicles import (VEHICLE_KINDS, VehicleParams, VehicleState,
                       initial_state, twist_to_actuation, vehicle_step)

__all__ = [
    "BackendInfo",
    "BackendRegistry",
    "BenchReport",
    "BenchRow",
    "CameraWrapper",
    "DEFAULT_METERS_PER_PIXEL",
    "DEFAULT_VIEWPORT_CENTER",
    "Frame",
    "ModelWrapper",
    "ScriptedGraspPolicy",
    "SimArmAdapter",
    "SyntheticCamera",
    "VEHICLE_KINDS",
    "VehicleParams",
    "VehicleState",
    "benchmark",
    "decode_scene",
    "default_frame_source",
    "default_registry",
    "initial_state",
    "render_scene",
    "twist_to_actuation",
    "vehicle_step",
]
