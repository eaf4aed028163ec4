"""Reward terms, policy feature extraction, imitation losses, and rollout metrics.

Everything here is a pure function of its inputs; nothing touches the
simulator state machine, so all of it is trivially thread-safe.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import TablePlane
from .grasps import RobotGrasp
from .hand_model import link_directions
from .transforms import Pose6D, matrix_to_rotvec


@dataclass(frozen=True)
class RewardWeights:
    """Static weights of the grasp reward.

    The contact-term weight is not stored: it is the dynamic
    ``contact_weight`` recomputed from the state at every step.
    beta_p (1/m) sharpens the position kernel exp(-beta_p * sum of gaps).
    """

    w_p: float = 1.0
    w_s: float = 0.1
    w_q: float = 0.5
    beta_p: float = 10.0

    def __post_init__(self):
        for name in ("w_p", "w_s", "w_q", "beta_p"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.beta_p <= 0:
            raise ValueError(f"beta_p must be positive, got {self.beta_p}")


@dataclass(frozen=True)
class SimState:
    """Simulator snapshot s = (q_r, T_r, Td_r, T_o, Td_o, c, f, G_r).

    Velocities are 6-vectors (linear, angular) in world coordinates.
    c and f are aligned with the insertion order of G_r.link_contacts;
    f holds nonnegative contact force magnitudes in newtons.
    """

    q_r: np.ndarray
    T_r: Pose6D
    Td_r: np.ndarray
    T_o: Pose6D
    Td_o: np.ndarray
    c: np.ndarray
    f: np.ndarray
    G_r: RobotGrasp

    def __post_init__(self):
        q = np.asarray(self.q_r, dtype=float).reshape(-1)
        vr = np.asarray(self.Td_r, dtype=float).reshape(-1)
        vo = np.asarray(self.Td_o, dtype=float).reshape(-1)
        if vr.shape != (6,) or vo.shape != (6,):
            raise ValueError("pose velocities must be 6-vectors (linear, angular)")
        c = np.asarray(self.c).astype(bool).reshape(-1)
        f = np.asarray(self.f, dtype=float).reshape(-1)
        L = len(self.G_r.link_contacts)
        if c.shape != (L,) or f.shape != (L,):
            raise ValueError(
                f"c and f must have one entry per reference contact link ({L}), "
                f"got {c.shape} and {f.shape}"
            )
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("contact forces must be finite and >= 0")
        for name, arr in (("q_r", q), ("Td_r", vr), ("Td_o", vo), ("c", c), ("f", f)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


# feature vector segment names, in order; tilde segments live in the wrist frame
FEATURE_SEGMENTS = (
    "q_r", "T_r", "Td_r", "T_o", "Td_o", "p_o", "p_r_z", "f", "g_p", "g_r", "g_c",
)


def feature_layout(dof, n_contact_links):
    """Index map of the feature vector: {segment name: (start, stop)}.

    Segment sizes for M joints and L reference contact links:
    q_r M | T_r 7 | Td_r 6 | T_o 7 | Td_o 6 | p_o 3 | p_r_z 1 | f L
    | g_p 3M | g_r 3 | g_c 2L, total 4M + 3L + 33.  Poses are packed as
    position (3) then quaternion (w, x, y, z).
    """
    sizes = {
        "q_r": dof, "T_r": 7, "Td_r": 6, "T_o": 7, "Td_o": 6,
        "p_o": 3, "p_r_z": 1, "f": n_contact_links,
        "g_p": 3 * dof, "g_r": 3, "g_c": 2 * n_contact_links,
    }
    layout = {}
    start = 0
    for name in FEATURE_SEGMENTS:
        layout[name] = (start, start + sizes[name])
        start += sizes[name]
    return layout


@dataclass(frozen=True)
class FeatureVector:
    """Flat policy observation plus the index map that documents its layout."""

    values: np.ndarray
    layout: dict

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def segment(self, name):
        start, stop = self.layout[name]
        return self.values[start:stop]

    def __getitem__(self, name):
        return self.segment(name)


def _pack_pose(pose):
    return np.concatenate([pose.position, pose.rotation])


def _target_wrist_world(state):
    # G_r stores the wrist pose in the object frame; the target tracks the object
    return state.T_o.compose(state.G_r.wrist_pose)


def _joint_origins(model, wrist, q):
    """World origin of every revolute joint frame, (M, 3)."""
    R, p = model.fk_arrays(wrist, q)
    idx = [model.link_index(n) for n in model.joint_links]
    return p[idx]


def extract_features(model, state, plane=None):
    """phi(s): the wrist-relative observation the grasping policy consumes.

    Tilde quantities are expressed in the current wrist frame, so the
    vector is invariant to rigid motions applied jointly to hand and
    object. p_o is the object position relative to the wrist (its
    displacement from the hand); p_r_z is the wrist height above the
    table. g_p stacks target-minus-current joint origins, g_r is the
    rotation vector of (current wrist rotation)^-1 (target rotation),
    and g_c = [target contacts | target minus current contacts].
    """
    if plane is None:
        plane = TablePlane()
    q = state.q_r
    if q.shape != (model.dof,):
        raise ValueError(f"state has {q.size} joint angles, model has {model.dof}")
    R_w = state.T_r.rotation_matrix()
    wrist_inv = state.T_r.inverse()

    T_o_rel = wrist_inv.compose(state.T_o)
    Td_r = np.concatenate([R_w.T @ state.Td_r[:3], R_w.T @ state.Td_r[3:]])
    Td_o = np.concatenate([R_w.T @ state.Td_o[:3], R_w.T @ state.Td_o[3:]])
    p_o = T_o_rel.position
    p_r_z = state.T_r.position[2] - plane.height

    target_wrist = _target_wrist_world(state)
    cur = _joint_origins(model, state.T_r, q)
    tgt = _joint_origins(model, target_wrist, state.G_r.joint_angles)
    g_p = (tgt - cur) @ R_w  # rows (R_w^T (tgt - cur))^T
    g_r = matrix_to_rotvec(R_w.T @ target_wrist.rotation_matrix())

    c_bar = np.array([float(v) for v in state.G_r.link_contacts.values()])
    g_c = np.concatenate([c_bar, c_bar - state.c.astype(float)])

    values = np.concatenate([
        q,
        _pack_pose(Pose6D.identity()),
        Td_r,
        _pack_pose(T_o_rel),
        Td_o,
        p_o,
        [p_r_z],
        state.f,
        g_p.ravel(),
        g_r,
        g_c,
    ])
    return FeatureVector(values, feature_layout(model.dof, len(state.G_r.link_contacts)))


# -- reward terms ------------------------------------------------------------


def reward_position(model, state, beta_p=10.0):
    """r_p = exp(-beta_p * sum_j ||target_j - current_j||) over joint origins."""
    cur = _joint_origins(model, state.T_r, state.q_r)
    tgt = _joint_origins(model, _target_wrist_world(state), state.G_r.joint_angles)
    gaps = np.linalg.norm(tgt - cur, axis=1)
    return float(np.exp(-beta_p * gaps.sum()))


def contact_weight(model, state):
    """Dynamic contact-term weight sum ||p_j||^2 / sum ||pbar_j||^2.

    Positions of the target-contact links in the object frame; current
    over target, so 1 at the target grasp and quadratic in radial scale.
    """
    names = [n for n, on in state.G_r.link_contacts.items() if on]
    if not names:
        warnings.warn("reference grasp has no target contacts; contact weight is 0")
        return 0.0
    idx = [model.link_index(n) for n in names]
    _, p_cur = model.fk_arrays(state.T_r, state.q_r)
    # G_r poses are object-frame already; current world positions get mapped back
    _, p_tgt = model.fk_arrays(state.G_r.wrist_pose, state.G_r.joint_angles)
    obj_inv = state.T_o.inverse()
    cur = obj_inv.transform_points(p_cur[idx])
    denom = float(np.sum(p_tgt[idx] ** 2))
    if denom <= 0.0:
        warnings.warn("target contact links sit at the object origin; contact weight is 0")
        return 0.0
    return float(np.sum(cur**2) / denom)


def reward_contact(state):
    """Fraction of target-contact links currently in contact."""
    c_bar = np.array(list(state.G_r.link_contacts.values()), dtype=bool)
    n_target = int(c_bar.sum())
    if n_target == 0:
        warnings.warn("reference grasp has no target contacts; contact reward is 0")
        return 0.0
    return float(np.sum(c_bar & state.c) / n_target)


def reward_safety(collision_forces):
    """Penalty for hand-table and self collisions: minus the summed magnitudes."""
    f = np.asarray(collision_forces, dtype=float)
    return float(-np.abs(f).sum())


def reward_pose(model, state):
    """r_q: mean (cos - 1) between current and target link directions.

    Directions are compared in the object frame so the term rewards a
    human-like posture relative to the object, not a world-frame pose.
    Range [-2, 0]; 0 iff every direction pair is aligned.
    """
    R_o = state.T_o.rotation_matrix()
    cur = link_directions(model, state.T_r, state.q_r)
    tgt = link_directions(model, state.G_r.wrist_pose, state.G_r.joint_angles)
    total = 0.0
    count = 0
    for dc, dt in zip(cur, tgt):
        cos = np.sum((dc @ R_o) * dt, axis=1)  # rows R_o^T d, already unit
        total += float(np.sum(cos - 1.0))
        count += len(dc)
    if count == 0:
        return 0.0
    return total / count


def total_reward(weights, model, state, collision_forces):
    """w_p r_p + contact_weight * r_c + w_s r_s + w_q r_q, no hidden terms."""
    r_p = reward_position(model, state, beta_p=weights.beta_p)
    w_c = contact_weight(model, state)
    r_c = reward_contact(state)
    r_s = reward_safety(collision_forces)
    r_q = reward_pose(model, state)
    return weights.w_p * r_p + w_c * r_c + weights.w_s * r_s + weights.w_q * r_q


# -- privileged-distillation losses ------------------------------------------


def loss_contact_reconstruction(c_hat, c, f_hat, f):
    """L_re = ||c_hat - c||^2 + ||f_hat - f||^2."""
    dc = np.asarray(c_hat, dtype=float) - np.asarray(c, dtype=float)
    df = np.asarray(f_hat, dtype=float) - np.asarray(f, dtype=float)
    return float(dc @ dc + df @ df)


def loss_action_imitation(a_hat, a):
    """L_act = ||a_hat - a||^2."""
    d = np.asarray(a_hat, dtype=float) - np.asarray(a, dtype=float)
    return float(d @ d)


# -- rollout metrics ---------------------------------------------------------


def _object_positions(traj):
    if traj.object_poses is None:
        raise ValueError("trajectory has no object poses")
    return np.array([p.position for p in traj.object_poses])


def _hold_window(times, hold_secs):
    # boolean mask of samples inside the trailing hold window, endpoint included
    return times >= times[-1] - hold_secs - 1e-9


def metric_success(traj, lift_height=0.1, hold_secs=3.0):
    """Lift-and-hold success flag.

    The object must end up higher than its initial height plus
    lift_height and stay there for the entire trailing hold_secs window;
    trajectories shorter than the window cannot demonstrate the hold.
    """
    pos = _object_positions(traj)
    t = traj.times
    if t[-1] - t[0] < hold_secs:
        return False
    z0 = pos[0, 2]
    held = pos[_hold_window(t, hold_secs), 2] > z0 + lift_height
    return bool(held.all())


def metric_simd(traj, hold_secs=3.0):
    """Mean object displacement in mm/s over the trailing hold window."""
    pos = _object_positions(traj)
    t = traj.times
    mask = _hold_window(t, hold_secs)
    idx = np.nonzero(mask)[0]
    if idx.size < 2:
        return 0.0
    d = np.linalg.norm(np.diff(pos[idx], axis=0), axis=1)
    dt = np.diff(t[idx])
    return float(np.mean(d / dt) * 1000.0)


def metric_contact_ratio(traj, reference, hold_secs=3.0):
    """Achieved-to-target contact ratio averaged over the trailing hold window.

    Trajectory contact flags are aligned with the insertion order of
    reference.link_contacts, the same convention as SimState.
    """
    if traj.contact_flags is None:
        raise ValueError("trajectory has no contact flags")
    c_bar = np.array(list(reference.link_contacts.values()), dtype=bool)
    if traj.contact_flags.shape[1] != c_bar.size:
        raise ValueError(
            f"contact flags have {traj.contact_flags.shape[1]} links, "
            f"reference has {c_bar.size}"
        )
    n_target = int(c_bar.sum())
    if n_target == 0:
        warnings.warn("reference grasp has no target contacts; contact ratio is 0")
        return 0.0
    flags = traj.contact_flags[_hold_window(traj.times, hold_secs)]
    per_step = (flags & c_bar).sum(axis=1) / n_target
    return float(per_step.mean())
