"""Perception and inference node bodies.

camera_node follows the platform's ground-truth feed and republishes it as
rendered frames at a fixed sim-time cadence; inference_node turns the
newest frame into an action. Both drain their inputs to the latest message
each wake so a fast simulation never builds a backlog.

Params (JSON-serializable, supplied by the orchestrator):

  camera_node    camera_id, camera (render config), rate_hz,
                 scene_topic (/world/arm), image topic override
  inference_node model_id, backend_id, task, image_topic,
                 action_topic (/vla/action), camera (for the task context)
"""

from __future__ import annotations

from .errors import CapabilityError
from .runtime import NodeContext
from .wrappers.camera import Frame, SyntheticCamera
from .wrappers.models import default_registry


def image_topic_for(camera_id: str) -> str:
    return f"/camera/{camera_id}/image"


def _drain_to_latest(sub, latest):
    for env in sub.drain():
        latest = env
    return latest


def camera_node(ctx: NodeContext) -> None:
    camera_id = ctx.params.get("camera_id", "synthetic0")
    cam_cfg = dict(ctx.params.get("camera") or {})
    topic = ctx.params.get("topic") or image_topic_for(camera_id)
    scene_topic = ctx.params.get("scene_topic", "/world/arm")
    period = 1.0 / float(cam_cfg.get("rate_hz", 20.0))

    bus, owner = ctx.bus, ctx.node_id
    if not bus.has_topic(scene_topic):
        raise CapabilityError(
            f"camera needs {scene_topic} (is the platform running?)")

    live = {"target": None, "tip": None}
    camera = SyntheticCamera(scene_source=lambda: live)
    camera.open(cam_cfg)
    bus.advertise(topic, "sensor/Image", owner)
    sub = bus.subscribe(scene_topic)
    next_frame = None
    try:
        while not ctx.stopped:
            env = sub.get(timeout=0.2)
            if env is None:
                if sub.closed:
                    break
                continue
            env = _drain_to_latest(sub, env)
            status = env.payload
            sim_time = status["sim_time"]
            if next_frame is None:
                next_frame = sim_time
            if sim_time + 1e-12 < next_frame:
                continue
            obj, tip = status["object_position"], status["tip_position"]
            live["target"] = (obj["x"], obj["y"], obj["z"])
            live["tip"] = (tip["x"], tip["y"], tip["z"])
            frame = camera.read()
            bus.publish(topic, frame.to_payload())
            # never schedule into the past: a fast sim may cross several
            # periods between wakes
            next_frame = max(next_frame + period, sim_time)
    finally:
        camera.close()


def inference_node(ctx: NodeContext) -> None:
    model_id = ctx.params.get("model_id", "scripted_grasp")
    backend_id = ctx.params.get("backend_id", "reference")
    image_topic = ctx.params.get("image_topic") or image_topic_for(
        ctx.params.get("camera_id", "synthetic0"))
    action_topic = ctx.params.get("action_topic", "/vla/action")
    cam_cfg = dict(ctx.params.get("camera") or {})
    task_context = {"task": ctx.params.get("task", "")}
    for key in ("viewport_center", "meters_per_pixel"):
        if key in cam_cfg:
            task_context[key] = cam_cfg[key]
    policy_cfg = dict(ctx.params.get("policy") or {})

    bus, owner = ctx.bus, ctx.node_id
    if not bus.has_topic(image_topic):
        raise CapabilityError(
            f"inference needs {image_topic} (is the camera running?)")

    registry = default_registry()
    wrapper = registry.create(model_id, backend_id)
    if policy_cfg and hasattr(wrapper, "step"):
        wrapper.step = float(policy_cfg.get("step", wrapper.step))
        wrapper.grasp_radius = float(
            policy_cfg.get("grasp_radius", wrapper.grasp_radius))
    wrapper.load(model_id, task_context)
    bus.advertise(action_topic, "vla/ActionVector7", owner)
    sub = bus.subscribe(image_topic, capacity=4)
    try:
        while not ctx.stopped:
            env = sub.get(timeout=0.2)
            if env is None:
                if sub.closed:
                    break
                continue
            env = _drain_to_latest(sub, env)
            frame = Frame.from_payload(env.payload, stamp_ns=env.stamp_ns)
            action = wrapper.predict_action(frame, task_context)
            bus.publish(action_topic, action.to_payload())
    finally:
        wrapper.unload()
