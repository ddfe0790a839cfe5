"""Arm controller node: joint states in, joint velocity commands out.

Two command sources, one output:

  /ee_cmd (arm/EECommand)       timed end-effector velocity. The node
      integrates a reference pose analytically from the pose at receipt,
      tracks it with feedforward + proportional correction, and after the
      duration holds the exact final reference as a position target, so
      displacement settles on commanded speed * duration.
  /vla/action (vla/ActionVector7)  each action becomes a position/
      orientation target relative to the pose at arrival, tracked with a
      speed-capped proportional law.

An EECommand preempts action tracking until it has run its duration.
Commands are recomputed per /joint_states tick (dt from sim-time deltas)
and published to /joint_cmd; on shutdown the node sends one final zero
velocity so the platform never keeps integrating a stale command.
"""

from __future__ import annotations

import numpy as np

from . import transforms as tf
from .errors import CapabilityError
from .kinematics import (ActionVector7, ControlParams, JointState, Pose,
                         action_to_target, control_step, forward_kinematics,
                         parse_urdf, pose_error)
from .runtime import NodeContext
from .world import SceneConfig


def _cap(v6: np.ndarray, params: ControlParams) -> np.ndarray:
    lin = float(np.linalg.norm(v6[:3]))
    if lin > params.max_linear_speed:
        v6[:3] *= params.max_linear_speed / lin
    ang = float(np.linalg.norm(v6[3:]))
    if ang > params.max_angular_speed:
        v6[3:] *= params.max_angular_speed / ang
    return v6


class _EeTracker:
    """Reference-pose integrator for one timed EECommand."""

    def __init__(self, payload: dict, start_pose: Pose, t0: float):
        lin, ang = payload["linear"], payload["angular"]
        self.linear = np.array([lin["x"], lin["y"], lin["z"]])
        self.angular = np.array([ang["x"], ang["y"], ang["z"]])
        self.duration = max(0.0, float(payload["duration"]))
        self.p0 = start_pose.position.copy()
        self.q0 = start_pose.orientation.copy()
        self.t0 = t0

    def done(self, t: float) -> bool:
        return t - self.t0 >= self.duration

    def reference(self, t: float) -> Pose:
        tau = min(max(0.0, t - self.t0), self.duration)
        position = self.p0 + self.linear * tau
        speed = float(np.linalg.norm(self.angular))
        if speed > 1e-12:
            delta = tf.quat_from_axis_angle(self.angular / speed, speed * tau)
            orientation = tf.quat_normalize(tf.quat_mul(delta, self.q0))
        else:
            orientation = self.q0
        return Pose(position, orientation)

    def command(self, t: float, current: Pose,
                params: ControlParams) -> np.ndarray:
        e = pose_error(self.reference(t), current)
        v6 = np.concatenate([params.kp_pos * e[:3], params.kp_rot * e[3:]])
        if not self.done(t):
            v6[:3] += self.linear
            v6[3:] += self.angular
        return _cap(v6, params)


def control_node(ctx: NodeContext) -> None:
    scene = SceneConfig.from_dict(ctx.params.get("scene"))
    chain = parse_urdf(scene.urdf_path().read_text())
    joint_topic = ctx.params.get("joint_topic", "/joint_states")
    action_topic = ctx.params.get("action_topic", "/vla/action")
    ee_topic = ctx.params.get("ee_topic", "/ee_cmd")
    cmd_topic = ctx.params.get("cmd_topic", "/joint_cmd")
    params = ControlParams()

    bus, owner = ctx.bus, ctx.node_id
    if not bus.has_topic(joint_topic):
        raise CapabilityError(
            f"controller needs {joint_topic} (is the platform running?)")
    # declare optional inputs so subscribing works before any publisher
    bus.advertise(action_topic, "vla/ActionVector7", owner)
    bus.advertise(ee_topic, "arm/EECommand", owner)
    bus.advertise(cmd_topic, "arm/JointCommand", owner)

    joint_sub = bus.subscribe(joint_topic)
    action_sub = bus.subscribe(action_topic, capacity=4)
    ee_sub = bus.subscribe(ee_topic, capacity=4)

    tracker: _EeTracker | None = None
    target: Pose | None = None
    gripper = 0.0
    last_t: float | None = None

    def publish_command(sim_time: float, qdot) -> None:
        bus.publish(cmd_topic, {
            "sim_time": sim_time,
            "velocity": [float(v) for v in qdot],
            "gripper": gripper,
        })

    sim_time = 0.0
    try:
        while not ctx.stopped:
            env = joint_sub.get(timeout=0.2)
            if env is None:
                if joint_sub.closed:
                    break
                continue
            for later in joint_sub.drain():
                env = later
            state = env.payload
            sim_time = state["sim_time"]
            q = np.asarray(state["position"], float)
            if q.shape != (chain.dof,):
                continue
            if last_t is None:
                last_t = sim_time
                continue
            dt = sim_time - last_t
            if dt <= 0.0:
                continue
            last_t = sim_time

            pose = forward_kinematics(chain, q)
            for ee_env in ee_sub.drain():
                tracker = _EeTracker(ee_env.payload, pose, sim_time)
                target = None
            for act_env in action_sub.drain():
                if tracker is not None and not tracker.done(sim_time):
                    continue  # timed command keeps priority until done
                tracker = None
                action = ActionVector7.from_payload(act_env.payload)
                target, gripper = action_to_target(pose, action)

            js = JointState(q, np.asarray(state["velocity"], float), sim_time)
            if tracker is not None:
                v6 = tracker.command(sim_time, pose, params)
                qdot = control_step(chain, js, v6, dt, params)
            elif target is not None:
                qdot = control_step(chain, js, target, dt, params)
            else:
                qdot = np.zeros(chain.dof)
            publish_command(sim_time, qdot)
    finally:
        try:
            publish_command(sim_time, np.zeros(chain.dof))
        except Exception:
            pass  # bus may already be retiring this node's topics
