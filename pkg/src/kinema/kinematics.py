"""Forward/inverse kinematics and trajectory expansion.

Action sequences (end-effector poses, joint positions, or joint velocities)
are expanded into per-link SE(3) pose sequences. IK is damped least squares
on the stacked 6-D pose error, seeded frame-to-frame for temporal smoothness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DofMismatch, NonpositiveDt, UnknownLink
from .robot_model import RobotModel
from .transforms import RigidTransform, pose_error, quat_from_axis_angle


@dataclass
class JointConfiguration:
    """Joint values aligned with the model's actuated_order (rad or m)."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)

    def copy(self) -> "JointConfiguration":
        return JointConfiguration(self.values.copy())


@dataclass
class ActionSequence:
    """Control input over T frames, one of three variants.

    mode "ee": targets is a list of RigidTransform, ee_link names the link.
    mode "joint": configurations is a list of JointConfiguration.
    mode "joint_velocity": velocities (T, dof), dt seconds, initial config.
    """
    mode: str
    targets: Optional[list[RigidTransform]] = None
    ee_link: Optional[str] = None
    configurations: Optional[list[JointConfiguration]] = None
    velocities: Optional[np.ndarray] = None
    dt: Optional[float] = None
    initial: Optional[JointConfiguration] = None

    def __len__(self) -> int:
        if self.mode == "ee":
            return len(self.targets)
        if self.mode == "joint":
            return len(self.configurations)
        return len(self.velocities)

    def to_json(self) -> dict:
        if self.mode == "ee":
            return {"mode": "ee", "ee_link": self.ee_link,
                    "targets": [t.to_json() for t in self.targets]}
        if self.mode == "joint":
            return {"mode": "joint",
                    "frames": [list(c.values) for c in self.configurations]}
        return {"mode": "joint_velocity", "dt": self.dt,
                "initial": list(self.initial.values),
                "velocities": [list(v) for v in self.velocities]}

    @staticmethod
    def from_json(obj: dict) -> "ActionSequence":
        mode = obj["mode"]
        if mode == "ee":
            return ActionSequence("ee", ee_link=obj.get("ee_link"),
                                  targets=[RigidTransform.from_json(t)
                                           for t in obj["targets"]])
        if mode == "joint":
            return ActionSequence("joint", configurations=[
                JointConfiguration(f) for f in obj["frames"]])
        if mode == "joint_velocity":
            return ActionSequence(
                "joint_velocity",
                velocities=np.asarray(obj["velocities"], dtype=np.float64),
                dt=float(obj["dt"]),
                initial=JointConfiguration(obj["initial"]))
        raise ValueError(f"unknown action mode {mode!r}")

    @staticmethod
    def load(path) -> "ActionSequence":
        with open(path) as f:
            return ActionSequence.from_json(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)


@dataclass
class LinkPoseSequence:
    """Per-frame map link-id -> RigidTransform in the canonical frame."""
    frames: list[dict[str, RigidTransform]]

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def link_count(self) -> int:
        return len(self.frames[0]) if self.frames else 0


@dataclass
class IkParams:
    damping: float = 1e-3
    max_iterations: int = 100
    position_tolerance: float = 1e-4    # meters
    rotation_tolerance: float = 1e-3    # radians
    step_scale: float = 1.0


def _check_dof(model: RobotModel, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(values) != model.dof:
        raise DofMismatch(f"expected {model.dof} joint values, got {len(values)}")
    return values


def _joint_motion(joint, value: float) -> RigidTransform:
    if joint.kind in ("revolute", "continuous"):
        return RigidTransform(quat_from_axis_angle(joint.axis, value), np.zeros(3))
    if joint.kind == "prismatic":
        return RigidTransform.from_translation(joint.axis * value)
    return RigidTransform.identity()


def forward_kinematics(model: RobotModel, q: JointConfiguration
                       ) -> dict[str, RigidTransform]:
    """Pose of every link given joint values; root link pose is identity."""
    values = _check_dof(model, q.values)
    by_name = dict(zip(model.actuated_order, values))
    poses = {model.root_link: RigidTransform.identity()}
    stack = [model.root_link]
    while stack:
        parent = stack.pop()
        for joint in model.child_joints[parent]:
            motion = _joint_motion(joint, by_name.get(joint.name, 0.0))
            poses[joint.child] = poses[parent] @ joint.origin @ motion
            stack.append(joint.child)
    return poses


def clamp_to_limits(model: RobotModel, values: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Hard-clamp joint values to limits; continuous joints are unlimited."""
    out = values.copy()
    clamped = []
    for i, name in enumerate(model.actuated_order):
        lim = model.joint(name).limits
        if lim is None:
            continue
        c = min(max(out[i], lim[0]), lim[1])
        if c != out[i]:
            clamped.append(name)
            out[i] = c
    return out, clamped


def mid_range_configuration(model: RobotModel) -> JointConfiguration:
    """Default IK seed: mid-range of limits, 0 for unlimited joints."""
    vals = np.zeros(model.dof)
    for i, name in enumerate(model.actuated_order):
        lim = model.joint(name).limits
        if lim is not None:
            vals[i] = 0.5 * (lim[0] + lim[1])
    return JointConfiguration(vals)


def _chain_to(model: RobotModel, link: str) -> list:
    """Joints on the path root -> link, in order."""
    chain = []
    cur = link
    while cur != model.root_link:
        j = model.parent_joint.get(cur)
        if j is None:
            raise UnknownLink(f"link {cur!r} not connected to root")
        chain.append(j)
        cur = j.parent
    return chain[::-1]


def geometric_jacobian(model: RobotModel, q: JointConfiguration, ee_link: str
                       ) -> np.ndarray:
    """6 x dof Jacobian of the ee pose (rows: linear xyz, angular xyz)."""
    if ee_link not in {l.name for l in model.links}:
        raise UnknownLink(ee_link)
    poses = forward_kinematics(model, q)
    p_ee = poses[ee_link].translation
    chain = {j.name for j in _chain_to(model, ee_link)}
    jac = np.zeros((6, model.dof))
    for i, name in enumerate(model.actuated_order):
        if name not in chain:
            continue
        joint = model.joint(name)
        parent_pose = poses[joint.parent] @ joint.origin
        z = parent_pose.rotation_matrix() @ joint.axis
        if joint.kind == "prismatic":
            jac[:3, i] = z
        else:
            p = parent_pose.translation
            jac[:3, i] = np.cross(z, p_ee - p)
            jac[3:, i] = z
    return jac


def inverse_kinematics(model: RobotModel, ee_link: str, target: RigidTransform,
                       seed: JointConfiguration, params: IkParams = IkParams()
                       ) -> tuple[JointConfiguration, bool, tuple[float, float]]:
    """Damped least-squares IK; returns (solution, converged, (pos, rot) residual).

    Joint limits are clamped each iteration; the best iterate is returned
    even when unconverged.
    """
    if ee_link not in {l.name for l in model.links}:
        raise UnknownLink(ee_link)
    q = _check_dof(model, seed.values).copy()
    q, _ = clamp_to_limits(model, q)
    lam2 = params.damping ** 2

    best_q, best_err = q.copy(), np.inf
    best_res = (np.inf, np.inf)
    for _ in range(params.max_iterations + 1):
        current = forward_kinematics(model, JointConfiguration(q))[ee_link]
        dt, dr = pose_error(current, target)
        pos_res, rot_res = np.linalg.norm(dt), np.linalg.norm(dr)
        err = pos_res + rot_res
        if err < best_err:
            best_q, best_err, best_res = q.copy(), err, (pos_res, rot_res)
        if pos_res <= params.position_tolerance and rot_res <= params.rotation_tolerance:
            return JointConfiguration(q), True, (pos_res, rot_res)
        jac = geometric_jacobian(model, JointConfiguration(q), ee_link)
        e = np.concatenate([dt, dr])
        jjt = jac @ jac.T + lam2 * np.eye(6)
        dq = jac.T @ np.linalg.solve(jjt, e)
        q = q + params.step_scale * dq
        q, _ = clamp_to_limits(model, q)
    return JointConfiguration(best_q), False, best_res


def integrate_velocities(model: RobotModel, initial: JointConfiguration,
                         velocities, dt: float
                         ) -> tuple[list[JointConfiguration], list[list[str]]]:
    """Forward-Euler integration with per-step limit clamping.

    Returns the configurations and, per step, the names of clamped joints.
    """
    if dt <= 0:
        raise NonpositiveDt(f"dt must be positive, got {dt}")
    q = _check_dof(model, initial.values).copy()
    out, clamp_events = [], []
    for v in velocities:
        v = _check_dof(model, v)
        q, clamped = clamp_to_limits(model, q + v * dt)
        out.append(JointConfiguration(q.copy()))
        clamp_events.append(clamped)
    return out, clamp_events


@dataclass
class ExpansionReport:
    diverged_frames: list[int] = field(default_factory=list)
    residuals: list[tuple[float, float]] = field(default_factory=list)


def expand_trajectory(model: RobotModel, actions: ActionSequence,
                      ee_link: Optional[str] = None,
                      params: IkParams = IkParams(),
                      initial_seed: Optional[JointConfiguration] = None
                      ) -> tuple[LinkPoseSequence, list[JointConfiguration], ExpansionReport]:
    """Resolve q_t per frame (direct, integrated, or IK seeded by q_{t-1}),
    then FK. IK divergence is recorded per frame, never aborting."""
    report = ExpansionReport()
    if actions.mode == "joint":
        qs = [JointConfiguration(_check_dof(model, c.values))
              for c in actions.configurations]
    elif actions.mode == "joint_velocity":
        qs, _ = integrate_velocities(model, actions.initial,
                                     actions.velocities, actions.dt)
    elif actions.mode == "ee":
        link = ee_link or actions.ee_link
        if link is None:
            raise UnknownLink("end-effector actions require an ee_link")
        seed = initial_seed if initial_seed is not None else mid_range_configuration(model)
        qs = []
        for t, target in enumerate(actions.targets):
            q, converged, res = inverse_kinematics(model, link, target, seed, params)
            if not converged:
                report.diverged_frames.append(t)
            report.residuals.append(res)
            qs.append(q)
            seed = q
    else:
        raise ValueError(f"unknown action mode {actions.mode!r}")
    frames = [forward_kinematics(model, q) for q in qs]
    return LinkPoseSequence(frames), qs, report


def apply_base_calibration(calibration: RigidTransform,
                           poses: LinkPoseSequence) -> LinkPoseSequence:
    """Left-multiply every link pose by the base-to-canonical calibration."""
    return LinkPoseSequence([
        {name: calibration @ pose for name, pose in frame.items()}
        for frame in poses.frames])
