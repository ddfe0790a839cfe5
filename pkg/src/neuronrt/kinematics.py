"""Serial-chain kinematics: URDF subset parsing, FK, geometric Jacobian,
damped-least-squares IK, and the per-tick control-step map.

Only serial chains are supported; branching or disconnected URDFs are
rejected. Fixed joints stay in the transform chain but contribute no degrees
of freedom. All quantities are expressed in the chain root (base) frame.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from . import transforms as tf
from .errors import DimensionMismatchError, UrdfError

MOVABLE_KINDS = ("revolute", "continuous", "prismatic")
JOINT_KINDS = MOVABLE_KINDS + ("fixed",)


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str
    parent: str
    child: str
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray
    axis: np.ndarray
    lower: float = -math.inf
    upper: float = math.inf
    velocity_limit: float = math.inf

    @property
    def movable(self) -> bool:
        return self.kind != "fixed"


@dataclass(frozen=True)
class KinematicChain:
    name: str
    root_link: str
    tip_link: str
    joints: tuple[Joint, ...]

    @property
    def movable_joints(self) -> tuple[Joint, ...]:
        return tuple(j for j in self.joints if j.movable)

    @property
    def dof(self) -> int:
        return len(self.movable_joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.movable_joints]

    def lower_limits(self) -> np.ndarray:
        return np.array([j.lower for j in self.movable_joints])

    def upper_limits(self) -> np.ndarray:
        return np.array([j.upper for j in self.movable_joints])

    def velocity_limits(self) -> np.ndarray:
        return np.array([j.velocity_limit for j in self.movable_joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower_limits(), self.upper_limits())


@dataclass
class Pose:
    """Position (m) plus w-first unit quaternion; |norm - 1| must be < 1e-9."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        if self.position.shape != (3,):
            raise ValueError("position must be a 3-vector")
        if self.orientation.shape != (4,):
            raise ValueError("orientation must be a w-first quaternion")
        if abs(np.linalg.norm(self.orientation) - 1.0) >= 1e-9:
            raise ValueError("orientation must be a unit quaternion (|norm-1| < 1e-9)")

    def rotation(self) -> np.ndarray:
        return tf.quat_to_matrix(self.orientation)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())


@dataclass
class JointState:
    positions: np.ndarray
    velocities: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)


@dataclass(frozen=True)
class ActionVector7:
    """Tip motion request: translation deltas in the base frame (m), rotation
    deltas composed in the tip frame (rad), gripper in [0, 1] (1 = close,
    threshold 0.5)."""

    dx: float
    dy: float
    dz: float
    droll: float
    dpitch: float
    dyaw: float
    gripper: float

    def __post_init__(self):
        values = (self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw, self.gripper)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("action components must be finite")
        if not 0.0 <= self.gripper <= 1.0:
            raise ValueError("gripper must be in [0, 1]")

    @classmethod
    def from_payload(cls, payload: dict) -> "ActionVector7":
        g = float(payload["gripper"])
        return cls(
            float(payload["dx"]), float(payload["dy"]), float(payload["dz"]),
            float(payload["droll"]), float(payload["dpitch"]), float(payload["dyaw"]),
            min(1.0, max(0.0, g)),
        )

    def to_payload(self) -> dict:
        return {
            "dx": self.dx, "dy": self.dy, "dz": self.dz,
            "droll": self.droll, "dpitch": self.dpitch, "dyaw": self.dyaw,
            "gripper": self.gripper,
        }

    def translation(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz])

    def to_tuple(self) -> tuple:
        return (self.dx, self.dy, self.dz, self.droll, self.dpitch,
                self.dyaw, self.gripper)


@dataclass
class EECommand:
    """End-effector velocity command in the base frame, held for `duration` s."""

    linear: np.ndarray
    angular: np.ndarray
    duration: float

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        self.angular = np.asarray(self.angular, dtype=float)
        if self.linear.shape != (3,) or self.angular.shape != (3,):
            raise ValueError("linear and angular must be 3-vectors")
        if not (math.isfinite(self.duration) and self.duration >= 0.0):
            raise ValueError("duration must be finite and >= 0")

    def twist(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


# --- urdf ----------------------------------------------------------------------

def _parse_triplet(text: str | None, what: str, default=None) -> np.ndarray:
    if text is None:
        if default is not None:
            return np.array(default, dtype=float)
        raise UrdfError(what, "missing 3-vector")
    parts = text.split()
    if len(parts) != 3:
        raise UrdfError(what, f"expected 3 numbers, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise UrdfError(what, f"bad number in {text!r}")


def parse_urdf(xml_text: str, tip_link: str | None = None) -> KinematicChain:
    """Parse the URDF subset: robot, link(name), joint(name, type), parent,
    child, origin(xyz, rpy), axis(xyz), limit(lower, upper, velocity).

    Everything else is ignored. The chain must be a single serial path.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise UrdfError("document", f"xml parse failure: {e}")
    if root.tag != "robot":
        raise UrdfError("document", f"root element must be <robot>, got <{root.tag}>")
    name = root.get("name", "robot")

    links: list[str] = []
    for el in root.findall("link"):
        link_name = el.get("name")
        if not link_name:
            raise UrdfError("link", "missing name attribute")
        if link_name in links:
            raise UrdfError("link", f"duplicate link {link_name!r}")
        links.append(link_name)
    if not links:
        raise UrdfError("robot", "no links")

    joints: list[Joint] = []
    by_parent: dict[str, Joint] = {}
    children: set[str] = set()
    for el in root.findall("joint"):
        jname = el.get("name")
        jkind = el.get("type")
        if not jname:
            raise UrdfError("joint", "missing name attribute")
        if jkind not in JOINT_KINDS:
            raise UrdfError(f"joint {jname!r}", f"unsupported type {jkind!r}")
        parent_el = el.find("parent")
        child_el = el.find("child")
        if parent_el is None or parent_el.get("link") is None:
            raise UrdfError(f"joint {jname!r}", "missing parent link")
        if child_el is None or child_el.get("link") is None:
            raise UrdfError(f"joint {jname!r}", "missing child link")
        parent, child = parent_el.get("link"), child_el.get("link")
        for link_name in (parent, child):
            if link_name not in links:
                raise UrdfError(f"joint {jname!r}", f"unknown link {link_name!r}")

        origin_el = el.find("origin")
        xyz = np.zeros(3)
        rpy = np.zeros(3)
        if origin_el is not None:
            xyz = _parse_triplet(origin_el.get("xyz"), f"joint {jname!r} origin xyz", (0, 0, 0))
            rpy = _parse_triplet(origin_el.get("rpy"), f"joint {jname!r} origin rpy", (0, 0, 0))

        axis = np.array([1.0, 0.0, 0.0])
        axis_el = el.find("axis")
        if axis_el is not None:
            axis = _parse_triplet(axis_el.get("xyz"), f"joint {jname!r} axis")
        if jkind != "fixed" and abs(np.linalg.norm(axis) - 1.0) >= 1e-9:
            raise UrdfError(f"joint {jname!r}", f"axis must be unit length, got {axis}")

        lower, upper, velocity = -math.inf, math.inf, math.inf
        limit_el = el.find("limit")
        if limit_el is not None:
            if limit_el.get("lower") is not None:
                lower = float(limit_el.get("lower"))
            if limit_el.get("upper") is not None:
                upper = float(limit_el.get("upper"))
            if limit_el.get("velocity") is not None:
                velocity = float(limit_el.get("velocity"))
                if velocity <= 0:
                    raise UrdfError(f"joint {jname!r}", "velocity limit must be > 0")
        if jkind in ("revolute", "prismatic"):
            if limit_el is None or math.isinf(lower) or math.isinf(upper):
                raise UrdfError(f"joint {jname!r}", f"{jkind} joints require limit lower/upper")
            if lower > upper:
                raise UrdfError(f"joint {jname!r}", "limit lower exceeds upper")

        joint = Joint(jname, jkind, parent, child, xyz, rpy, axis, lower, upper, velocity)
        if parent in by_parent:
            raise UrdfError(f"joint {jname!r}", f"branching at link {parent!r}")
        if child in children:
            raise UrdfError(f"joint {jname!r}", f"link {child!r} has two parents")
        by_parent[parent] = joint
        children.add(child)
        joints.append(joint)

    roots = [l for l in links if l not in children]
    if len(roots) != 1:
        raise UrdfError("robot", f"need exactly one root link, found {roots}")
    root_link = roots[0]

    ordered: list[Joint] = []
    current = root_link
    while current in by_parent:
        joint = by_parent[current]
        ordered.append(joint)
        current = joint.child
        if tip_link is not None and current == tip_link:
            break
    discovered_tip = current
    if tip_link is not None and discovered_tip != tip_link:
        raise UrdfError("robot", f"tip link {tip_link!r} not on the chain")
    if len(ordered) != len(joints) and tip_link is None:
        raise UrdfError("robot", "disconnected joints outside the serial chain")

    return KinematicChain(name, root_link, discovered_tip, tuple(ordered))


# --- fk / jacobian --------------------------------------------------------------

def _check_q(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise DimensionMismatchError(
            f"chain has {chain.dof} movable joints, got q of shape {q.shape}"
        )
    return q


def _walk(chain: KinematicChain, q: np.ndarray):
    """Yield (joint, z_axis_in_base, joint_origin_in_base) for movable joints,
    returning the final (R, p) tip frame."""
    R = np.eye(3)
    p = np.zeros(3)
    per_joint = []
    qi = iter(q)
    for joint in chain.joints:
        p = p + R @ joint.origin_xyz
        R = R @ tf.rotation_from_rpy(*joint.origin_rpy)
        if joint.kind == "fixed":
            continue
        z = R @ joint.axis
        per_joint.append((joint, z, p.copy()))
        value = float(next(qi))
        if joint.kind in ("revolute", "continuous"):
            R = R @ tf.rotation_from_axis_angle(joint.axis, value)
        else:  # prismatic
            p = p + R @ (joint.axis * value)
    return per_joint, R, p


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Tip pose in the root-link frame."""
    q = _check_q(chain, q)
    _, R, p = _walk(chain, q)
    return Pose(p, tf.matrix_to_quat(R))


def jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Geometric Jacobian at the tip, 6 x dof, linear rows above angular rows."""
    q = _check_q(chain, q)
    per_joint, _, p_tip = _walk(chain, q)
    J = np.zeros((6, chain.dof))
    for i, (joint, z, p_i) in enumerate(per_joint):
        if joint.kind == "prismatic":
            J[:3, i] = z
        else:
            J[:3, i] = np.cross(z, p_tip - p_i)
            J[3:, i] = z
    return J


# --- ik --------------------------------------------------------------------------

@dataclass(frozen=True)
class IkParams:
    damping: float = 0.05          # lambda cap in the DLS normal equations
    damping_floor: float = 1e-3    # constant lambda stalls just above pos_tol
    step_clamp: float = 0.2        # max |dq_i| per iteration, rad (or m)
    max_iters: int = 200
    pos_tol: float = 1e-4          # m
    rot_tol: float = 1e-3          # rad


@dataclass(frozen=True)
class IkResult:
    converged: bool
    q: np.ndarray
    iterations: int
    pos_residual: float
    rot_residual: float

    @property
    def residual(self) -> float:
        return self.pos_residual


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector [position error; angle-axis orientation error]."""
    e = np.zeros(6)
    e[:3] = target.position - current.position
    e[3:] = tf.orientation_error(target.orientation, current.orientation)
    return e


def ik_solve(chain: KinematicChain, q0, target: Pose,
             params: IkParams = IkParams()) -> IkResult:
    """Damped-least-squares IK with per-step clamping and limit projection.

    Damping is proportional to the residual, clipped to
    [damping_floor, damping]; far from the target it equals `damping`, near
    it it shrinks so near-singular directions finish instead of stalling.
    Deterministic: same inputs give bit-identical results. Non-convergence
    is reported in the result, not raised.
    """
    q = chain.clamp(_check_q(chain, q0))
    eye = np.eye(6)
    best_q = q.copy()
    best_err = math.inf
    best_pos = best_rot = math.inf
    for iteration in range(params.max_iters + 1):
        current = forward_kinematics(chain, q)
        e = pose_error(target, current)
        pos_err = float(np.linalg.norm(e[:3]))
        rot_err = float(np.linalg.norm(e[3:]))
        score = pos_err + rot_err
        if score < best_err:
            best_err, best_q = score, q.copy()
            best_pos, best_rot = pos_err, rot_err
        if pos_err < params.pos_tol and rot_err < params.rot_tol:
            return IkResult(True, q.copy(), iteration, pos_err, rot_err)
        if iteration == params.max_iters:
            break
        lam = min(params.damping, max(params.damping_floor, math.hypot(pos_err, rot_err)))
        J = jacobian(chain, q)
        dq = J.T @ np.linalg.solve(J @ J.T + (lam * lam) * eye, e)
        dq = np.clip(dq, -params.step_clamp, params.step_clamp)
        q = chain.clamp(q + dq)
    return IkResult(False, best_q, params.max_iters, best_pos, best_rot)


# --- control -----------------------------------------------------------------------

@dataclass(frozen=True)
class ControlParams:
    damping: float = 0.05
    kp_pos: float = 4.0            # 1/s, position-mode proportional gain
    kp_rot: float = 4.0
    max_linear_speed: float = 0.25  # m/s cap on position-mode commands
    max_angular_speed: float = 1.5  # rad/s


def dls_velocities(chain: KinematicChain, q, v_desired: np.ndarray,
                   damping: float = 0.05) -> np.ndarray:
    """qdot = J^T (J J^T + lambda^2 I)^-1 v_desired."""
    J = jacobian(chain, q)
    lam2 = damping ** 2
    return J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), np.asarray(v_desired, float))


def scale_to_velocity_limits(qdot: np.ndarray, limits: np.ndarray) -> np.ndarray:
    """Uniformly scale qdot so every joint obeys its limit; preserves direction."""
    qdot = np.asarray(qdot, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(qdot) / limits
    worst = float(np.max(ratios)) if qdot.size else 0.0
    if worst > 1.0:
        return qdot / worst
    return qdot


def control_step(chain: KinematicChain, current: JointState, command, dt: float,
                 params: ControlParams = ControlParams()) -> np.ndarray:
    """One control tick: desired twist -> damped joint velocities within limits.

    `command` may be an EECommand (velocity mode), a Pose (position mode:
    v = K * pose-error, speed-capped), or a raw 6-vector twist.
    """
    q = _check_q(chain, current.positions)
    if isinstance(command, EECommand):
        v = command.twist()
    elif isinstance(command, Pose):
        e = pose_error(command, forward_kinematics(chain, q))
        v = np.concatenate([params.kp_pos * e[:3], params.kp_rot * e[3:]])
        lin = float(np.linalg.norm(v[:3]))
        if lin > params.max_linear_speed:
            v[:3] *= params.max_linear_speed / lin
        ang = float(np.linalg.norm(v[3:]))
        if ang > params.max_angular_speed:
            v[3:] *= params.max_angular_speed / ang
    else:
        v = np.asarray(command, dtype=float)
        if v.shape != (6,):
            raise DimensionMismatchError("twist command must be a 6-vector")
    qdot = dls_velocities(chain, q, v, params.damping)
    return scale_to_velocity_limits(qdot, chain.velocity_limits())


def action_to_target(current: Pose, action: ActionVector7) -> tuple[Pose, float]:
    """Target pose for a 7-dof action: translation in base frame, rotation
    composed in the tip frame; returns (pose, gripper)."""
    position = current.position + action.translation()
    delta = tf.quat_from_rpy(action.droll, action.dpitch, action.dyaw)
    orientation = tf.quat_normalize(tf.quat_mul(current.orientation, delta))
    return Pose(position, orientation), action.gripper
