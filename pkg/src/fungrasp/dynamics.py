"""Per-joint actuator simulation and gravity compensation.

Each joint is a decoupled lumped-inertia second-order system driven by a
PD actuator: tau = k (q_cmd - q) - d qdot [+ compensation] - gravity load,
integrated with semi-implicit Euler under a zero-order hold of the
commands at the control rate. No Coriolis/inertia coupling: the sysid
target is per-joint stiffness/damping only.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .transforms import Pose6D

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ActuatorParams:
    stiffness: np.ndarray  # (M,) N*m/rad
    damping: np.ndarray    # (M,) N*m*s/rad

    def __post_init__(self):
        k = np.array(self.stiffness, dtype=float).reshape(-1)
        d = np.array(self.damping, dtype=float).reshape(-1)
        if k.shape != d.shape:
            raise ValueError("stiffness/damping length mismatch")
        for name, a in (("stiffness", k), ("damping", d)):
            if not np.all(np.isfinite(a)) or np.any(a <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
        k.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "damping", d)

    def to_json(self):
        return json.dumps(
            {"stiffness": self.stiffness.tolist(), "damping": self.damping.tolist()}, indent=2
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(np.array(obj["stiffness"], dtype=float), np.array(obj["damping"], dtype=float))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    control_hz: float = 10.0
    gravity: tuple = (0.0, 0.0, -9.81)
    joint_inertia: float | np.ndarray = 1e-3  # scalar broadcasts over joints
    gravity_comp: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.control_hz <= 0:
            raise ValueError("control_hz must be positive")
        if self.dt > 1.0 / self.control_hz + 1e-12:
            raise ValueError("dt must not exceed the control period")
        g = np.array(self.gravity, dtype=float).reshape(3)
        g.flags.writeable = False
        object.__setattr__(self, "gravity", g)

    def inertia_array(self, dof):
        inert = np.broadcast_to(np.asarray(self.joint_inertia, dtype=float), (dof,)).copy()
        if np.any(inert <= 0):
            raise ValueError("joint_inertia must be strictly positive")
        return inert

    @property
    def steps_per_tick(self):
        n = int(round(1.0 / (self.control_hz * self.dt)))
        return max(n, 1)


@dataclass
class JointTrajectory:
    times: np.ndarray        # (N,) seconds, strictly increasing
    q_measured: np.ndarray   # (N, M)
    q_commanded: np.ndarray  # (N, M)
    object_poses: list | None = None   # N Pose6D
    contact_flags: np.ndarray | None = field(default=None)  # (N, L) binary

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        qm = np.asarray(self.q_measured, dtype=float)
        qc = np.asarray(self.q_commanded, dtype=float)
        if qm.shape != qc.shape or qm.shape[0] != t.shape[0]:
            raise ValueError("trajectory arrays disagree in length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.object_poses is not None and len(self.object_poses) != t.size:
            raise ValueError("object_poses length mismatch")
        if self.contact_flags is not None:
            cf = np.asarray(self.contact_flags)
            if cf.shape[0] != t.size:
                raise ValueError("contact_flags length mismatch")
            self.contact_flags = cf.astype(bool)
        self.times = t
        self.q_measured = qm
        self.q_commanded = qc

    def __len__(self):
        return self.times.size


def trajectory_to_jsonl(traj):
    lines = []
    for i in range(len(traj)):
        rec = {
            "t": traj.times[i],
            "q": traj.q_measured[i].tolist(),
            "q_cmd": traj.q_commanded[i].tolist(),
        }
        if traj.object_poses is not None:
            pose = traj.object_poses[i]
            rec["obj_pose"] = {
                "position": pose.position.tolist(),
                "rotation": pose.rotation.tolist(),
            }
        if traj.contact_flags is not None:
            rec["contacts"] = [int(c) for c in traj.contact_flags[i]]
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


class TrajectoryFormatError(ValueError):
    pass


def trajectory_from_jsonl(text):
    times, qs, cmds, poses, contacts = [], [], [], [], []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise TrajectoryFormatError(f"line {ln}: {e.msg}") from e
        try:
            times.append(float(rec["t"]))
            qs.append(rec["q"])
            cmds.append(rec["q_cmd"])
        except KeyError as e:
            raise TrajectoryFormatError(f"line {ln}: missing key {e.args[0]!r}") from e
        if "obj_pose" in rec:
            poses.append(
                Pose6D(
                    np.array(rec["obj_pose"]["position"], dtype=float),
                    np.array(rec["obj_pose"]["rotation"], dtype=float),
                )
            )
        if "contacts" in rec:
            contacts.append(rec["contacts"])
    if not times:
        raise TrajectoryFormatError("empty trajectory")
    if poses and len(poses) != len(times):
        raise TrajectoryFormatError("obj_pose present on some lines only")
    if contacts and len(contacts) != len(times):
        raise TrajectoryFormatError("contacts present on some lines only")
    return JointTrajectory(
        np.array(times),
        np.array(qs, dtype=float),
        np.array(cmds, dtype=float),
        object_poses=poses or None,
        contact_flags=np.array(contacts, dtype=bool) if contacts else None,
    )


def save_trajectory(traj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trajectory_to_jsonl(traj))


def load_trajectory(path):
    with open(path, "r", encoding="utf-8") as fh:
        return trajectory_from_jsonl(fh.read())


# -- gravity ----------------------------------------------------------------


def gravity_torques(model, wrist, q, gravity=(0.0, 0.0, -9.81)):
    """Static gravity load on each joint: the gradient dU/dq of the
    gravitational potential energy. Feedforward compensation adds the
    negated load."""
    q = np.asarray(q, dtype=float)
    return _gravity_at(model, wrist, q, gravity)


# -- integration ------------------------------------------------------------


def step(model, params, config, state, q_target, wrist=None):
    """One dt of semi-implicit Euler; returns the next (q, qdot).

    With gravity_comp the feedforward exactly cancels the load, so the
    net gravity term is identically zero (computed as a skip, keeping
    step and rollout bitwise consistent)."""
    q, qd = state
    q = np.asarray(q, dtype=float).copy()
    qd = np.asarray(qd, dtype=float).copy()
    q_target = np.asarray(q_target, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        raise FloatingPointError("non-finite state")
    wrist = wrist or Pose6D.identity()
    tau = params.stiffness * (q_target - q) - params.damping * qd
    if not config.gravity_comp and np.any(config.gravity != 0) and np.any(model.link_mass > 0):
        tau = tau - _gravity_at(model, wrist, q, config.gravity)
    qd = qd + (tau / config.inertia_array(model.dof)) * config.dt
    q = q + qd * config.dt
    below = q < model.limits_lower
    above = q > model.limits_upper
    if np.any(below) or np.any(above):
        q = np.clip(q, model.limits_lower, model.limits_upper)
        qd[below | above] = 0.0
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("step diverged")
    return q, qd


def _gravity_at(model, wrist, q, g):
    R, p = model.fk_arrays(wrist, q)
    return kernels.gravity_torques_arrays(
        R, p, model.axis_local, model.joint_idx, model.link_mass, model.link_com,
        model.ancestor_mask, np.asarray(g, dtype=float),
    )


def rollout(model, params, config, q0, commands, wrist=None, qd0=None):
    """Open-loop rollout: zero-order hold of each command for one control
    period, integrating at dt; q is recorded at the start of each tick."""
    commands = np.asarray(commands, dtype=float)
    if commands.ndim != 2 or commands.shape[0] == 0:
        raise ValueError("commands must be a nonempty (N, M) array")
    if commands.shape[1] != model.dof:
        raise ValueError(f"commands have {commands.shape[1]} joints, model has {model.dof}")
    q0 = np.asarray(q0, dtype=float)
    qd0 = np.zeros(model.dof) if qd0 is None else np.asarray(qd0, dtype=float)
    wrist = wrist or Pose6D.identity()
    fk_args = (
        model.parent_idx, model.origin_R, model.origin_p, model.axis_local,
        model.joint_idx, model.topo_order, model.link_mass, model.link_com,
        model.ancestor_mask, wrist.rotation_matrix(), wrist.position,
    )
    q_meas, _, _ = kernels.pd_rollout(
        q0.copy(), qd0.copy(), commands, config.steps_per_tick, config.dt,
        params.stiffness, params.damping, config.inertia_array(model.dof),
        model.limits_lower, model.limits_upper, config.gravity_comp,
        config.gravity, fk_args,
    )
    times = np.arange(commands.shape[0]) / config.control_hz
    return JointTrajectory(times, q_meas, commands.copy())


# -- domain randomization -----------------------------------------------------


@dataclass(frozen=True)
class ParamRange:
    """Uniform sampling range: relative +-fraction around the nominal, or
    absolute [lower, upper] bounds."""

    nominal: float | np.ndarray
    rel: float | None = None
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.rel is not None:
            if not 0 <= self.rel < 1:
                raise ValueError("relative fraction must be in [0, 1)")
            if self.lower is not None or self.upper is not None:
                raise ValueError("give either rel or absolute bounds, not both")
        elif (self.lower is None) != (self.upper is None):
            raise ValueError("absolute bounds need both lower and upper")
        elif self.lower is not None and not self.lower <= self.upper:
            raise ValueError("bounds out of order")

    def bounds(self):
        nom = np.asarray(self.nominal, dtype=float)
        if self.rel is not None:
            return nom * (1 - self.rel), nom * (1 + self.rel)
        if self.lower is None:
            return nom, nom  # zero-width: always the nominal
        return np.broadcast_to(self.lower, nom.shape), np.broadcast_to(self.upper, nom.shape)

    def sample(self, rng):
        lo, hi = self.bounds()
        return rng.uniform(lo, hi)


@dataclass(frozen=True)
class RandomizationConfig:
    damping: ParamRange
    pd_gains: ParamRange
    friction: ParamRange
    object_mass: ParamRange
    table_height: ParamRange
    obs_noise_sigma: ParamRange

    FIELDS = ("damping", "pd_gains", "friction", "object_mass", "table_height", "obs_noise_sigma")


def sample_randomization(config, seed):
    """One uniform draw per field; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    return {name: getattr(config, name).sample(rng) for name in RandomizationConfig.FIELDS}


_RANGE_KEYS = {"nominal", "rel", "lower", "upper"}


def randomization_config_from_json(text):
    """Parse {"damping": {"nominal": .., "rel": ..}, ...}; every field of
    RandomizationConfig must be present, ranges as ParamRange kwargs."""
    obj = json.loads(text)
    unknown = set(obj) - set(RandomizationConfig.FIELDS)
    if unknown:
        raise ValueError(f"unknown randomization fields {sorted(unknown)}")
    missing = set(RandomizationConfig.FIELDS) - set(obj)
    if missing:
        raise ValueError(f"missing randomization fields {sorted(missing)}")
    ranges = {}
    for name in RandomizationConfig.FIELDS:
        spec = obj[name]
        if not isinstance(spec, dict) or "nominal" not in spec:
            raise ValueError(f"{name}: expected an object with a 'nominal' key")
        bad = set(spec) - _RANGE_KEYS
        if bad:
            raise ValueError(f"{name}: unknown keys {sorted(bad)}")
        nominal = spec["nominal"]
        nominal = np.asarray(nominal, dtype=float) if isinstance(nominal, list) else float(nominal)
        ranges[name] = ParamRange(
            nominal,
            rel=spec.get("rel"),
            lower=spec.get("lower"),
            upper=spec.get("upper"),
        )
    return RandomizationConfig(**ranges)


# -- rollout initial conditions ----------------------------------------------


def initial_state(grasp, object_center, model=None):
    """Pre-grasp initial condition: half the reference joint angles and a
    wrist backed off 30 cm from the object center toward the target wrist."""
    object_center = np.asarray(object_center, dtype=float).reshape(3)
    q_init = 0.5 * grasp.joint_angles
    if model is not None:
        q_init = model.clamp(q_init)
    d = grasp.wrist_pose.position - object_center
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise ValueError("target wrist coincides with the object center")
    wrist_init = Pose6D(object_center + 0.30 * (d / n), grasp.wrist_pose.rotation)
    return q_init, wrist_init
