"""Action-model wrappers and the backend registry.

A model wrapper turns a camera frame plus task context into a 7-element
action (dx, dy, dz, droll, dpitch, dyaw, gripper). The scripted grasp
policy included here needs no weights: it decodes the synthetic camera's
markers and walks the tip toward the target with a capped proportional
step, closing the gripper inside the grasp radius.

Registry slots exist so alternative serving backends can be plugged in by
id; the default registry ships the scripted policy under three backends
with different latency/step profiles for benchmarking.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

from ..errors import DuplicateBackendError, NotLoadedError, UnknownBackendError
from ..kinematics import ActionVector7
from .camera import (DEFAULT_METERS_PER_PIXEL, DEFAULT_VIEWPORT_CENTER, Frame,
                     decode_scene)

DEFAULT_STEP = 0.02
DEFAULT_GRASP_RADIUS = 0.02


class ModelWrapper:
    """Contract: load(model_ref, task_context) -> predict_action(frame,
    task_context) -> unload()."""

    def load(self, model_ref: str, task_context: dict) -> None:
        raise NotImplementedError

    def predict_action(self, frame: Frame, task_context: dict) -> ActionVector7:
        raise NotImplementedError

    def unload(self) -> None:
        raise NotImplementedError


class ScriptedGraspPolicy(ModelWrapper):
    """Proportional visual servo on the synthetic camera's markers.

    Translation: full error vector, norm-capped at `step` meters per
    prediction. Rotation deltas stay zero. Gripper commands 1.0 once the
    decoded tip-target distance is inside `grasp_radius`, else 0.0.
    """

    def __init__(self, step: float = DEFAULT_STEP,
                 grasp_radius: float = DEFAULT_GRASP_RADIUS):
        self.step = float(step)
        self.grasp_radius = float(grasp_radius)
        self._loaded = False
        self._model_ref = ""
        self.last_diagnostics: dict = {}

    def load(self, model_ref: str, task_context: dict) -> None:
        self._model_ref = model_ref
        self._loaded = True
        self.last_diagnostics = {}

    def unload(self) -> None:
        self._loaded = False

    def predict_action(self, frame: Frame, task_context: dict) -> ActionVector7:
        if not self._loaded:
            raise NotLoadedError("model is not loaded")
        center = tuple(task_context.get("viewport_center", DEFAULT_VIEWPORT_CENTER))
        mpp = float(task_context.get("meters_per_pixel", DEFAULT_METERS_PER_PIXEL))
        scene = decode_scene(frame.data, frame.width, frame.height, center, mpp)
        target, tip = scene["target"], scene["tip"]

        delta = (0.0, 0.0, 0.0)
        gripper = 0.0
        distance = math.inf
        if target is not None and tip is not None:
            err = (target[0] - tip[0], target[1] - tip[1], target[2] - tip[2])
            distance = math.sqrt(err[0] ** 2 + err[1] ** 2 + err[2] ** 2)
            if distance > 0.0:
                # keep closing the residual even while gripping; decode
                # quantization can report "inside radius" a few mm early
                scale = min(1.0, self.step / distance)
                delta = (err[0] * scale, err[1] * scale, err[2] * scale)
            if distance <= self.grasp_radius:
                gripper = 1.0

        self.last_diagnostics = {
            "task": task_context.get("task", ""),
            "target": target,
            "tip": tip,
            "distance": distance,
        }
        return ActionVector7.from_payload({
            "dx": delta[0], "dy": delta[1], "dz": delta[2],
            "droll": 0.0, "dpitch": 0.0, "dyaw": 0.0, "gripper": gripper,
        })


class _DelayedPolicy(ScriptedGraspPolicy):
    """Same outputs as the reference policy, slower by a fixed sleep."""

    def __init__(self, delay_s: float, **kwargs):
        super().__init__(**kwargs)
        self.delay_s = delay_s

    def predict_action(self, frame: Frame, task_context: dict) -> ActionVector7:
        time.sleep(self.delay_s)
        return super().predict_action(frame, task_context)


@dataclass(frozen=True)
class BackendInfo:
    model_id: str
    backend_id: str
    latency_class: str
    description: str


@dataclass
class BackendRegistry:
    """Maps (model id, backend id) to a wrapper factory plus metadata."""

    _entries: dict = field(default_factory=dict)

    def register(self, model_id: str, backend_id: str,
                 factory: Callable[[], ModelWrapper],
                 latency_class: str = "medium", description: str = "") -> None:
        key = (model_id, backend_id)
        if key in self._entries:
            raise DuplicateBackendError(model_id, backend_id)
        info = BackendInfo(model_id, backend_id, latency_class, description)
        self._entries[key] = (factory, info)

    def create(self, model_id: str, backend_id: str) -> ModelWrapper:
        try:
            factory, _ = self._entries[(model_id, backend_id)]
        except KeyError:
            raise UnknownBackendError(model_id, backend_id, self.available()) from None
        return factory()

    def info(self, model_id: str, backend_id: str) -> BackendInfo:
        try:
            return self._entries[(model_id, backend_id)][1]
        except KeyError:
            raise UnknownBackendError(model_id, backend_id, self.available()) from None

    def available(self) -> list[tuple[str, str]]:
        return sorted(self._entries)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._entries


def default_registry() -> BackendRegistry:
    reg = BackendRegistry()
    reg.register("scripted_grasp", "reference", ScriptedGraspPolicy,
                 latency_class="fast",
                 description="streamlined scripted grasp policy")
    reg.register("scripted_grasp", "delayed_5ms",
                 lambda: _DelayedPolicy(0.005),
                 latency_class="slow",
                 description="reference policy with a 5 ms serving delay")
    reg.register("scripted_grasp", "small_step",
                 lambda: ScriptedGraspPolicy(step=DEFAULT_STEP / 2),
                 latency_class="fast",
                 description="half step size, more conservative approach")
    # serving-stack slots reserved for external engines; factories raise
    # until an integration is provided
    for backend, desc in (("fastv", "token-pruned transformer serving"),
                          ("llama_cpp", "quantized CPU inference")):
        reg.register("openvla_stub", backend,
                     _unavailable_factory(backend),
                     latency_class="slow", description=desc + " (slot only)")
    return reg


def _unavailable_factory(backend: str) -> Callable[[], ModelWrapper]:
    def factory() -> ModelWrapper:
        raise NotLoadedError(
            f"backend {backend!r} is a registry slot without a bundled engine")
    return factory
