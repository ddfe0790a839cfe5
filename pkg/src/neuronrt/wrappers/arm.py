"""Simulated manipulator: exact velocity integration over a kinematic
chain, plus a grasp model.

No dynamics; joints move exactly v * dt per step (clamped to joint
velocity and position limits), which keeps tests bit-reproducible. The
gripper attaches the scene object when commanded closed while the tip is
inside the attach radius; an attached object follows the tip until the
gripper opens again.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatchError
from ..kinematics import JointState, KinematicChain, forward_kinematics

DEFAULT_ATTACH_RADIUS = 0.02
DEFAULT_GRIPPER_THRESHOLD = 0.5


class SimArmAdapter:
    def __init__(self, chain: KinematicChain, home,
                 object_position=(0.45, 0.1, 0.05),
                 attach_radius: float = DEFAULT_ATTACH_RADIUS,
                 gripper_threshold: float = DEFAULT_GRIPPER_THRESHOLD):
        self.chain = chain
        home = np.asarray(home, dtype=float)
        if home.shape != (chain.dof,):
            raise DimensionMismatchError(
                f"home has {home.size} values, chain has {chain.dof} joints")
        self.q = chain.clamp(home)
        self.qdot = np.zeros(chain.dof)
        self.gripper = 0.0
        self.object_position = np.asarray(object_position, dtype=float).copy()
        self.attach_radius = float(attach_radius)
        self.gripper_threshold = float(gripper_threshold)
        self.attached = False
        self.t = 0.0
        self._vel_limits = chain.velocity_limits()

    def tip_position(self) -> np.ndarray:
        return forward_kinematics(self.chain, self.q).position

    def apply(self, velocities, gripper_cmd: float, dt: float) -> None:
        velocities = np.asarray(velocities, dtype=float)
        if velocities.shape != (self.chain.dof,):
            raise DimensionMismatchError(
                f"command has {velocities.size} values, "
                f"chain has {self.chain.dof} joints")
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        velocities = np.clip(velocities, -self._vel_limits, self._vel_limits)
        self.q = self.chain.clamp(self.q + velocities * dt)
        self.qdot = velocities
        self.gripper = min(1.0, max(0.0, float(gripper_cmd)))
        self.t += dt

        tip = self.tip_position()
        if self.attached:
            if self.gripper < self.gripper_threshold:
                self.attached = False
            else:
                self.object_position = tip.copy()
        elif (self.gripper >= self.gripper_threshold
              and np.linalg.norm(tip - self.object_position) <= self.attach_radius):
            self.attached = True
            self.object_position = tip.copy()

    def joint_state(self) -> JointState:
        return JointState(self.q.copy(), self.qdot.copy(), stamp=self.t)

    def state(self) -> dict:
        return {
            "q": self.q.copy(),
            "qdot": self.qdot.copy(),
            "gripper": self.gripper,
            "tip": self.tip_position(),
            "object_position": self.object_position.copy(),
            "attached": self.attached,
            "t": self.t,
        }
