"""Human-to-robot grasp retargeting.

Initialization aligns the robot's zero-configuration fingertips to the
human fingertips (Kabsch) and then matches per-finger link directions.
Optimization minimizes

    w_pen L_pen + w_fc L_fc + w_pos L_pos + w_joints L_joints + w_col L_col

over the wrist pose (SE(3), rotation as a rotation-vector increment) and
the M joint angles, using adaptive-moment descent with central
finite-difference gradients and backtracking acceptance, so the recorded
total loss is non-increasing.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import TablePlane
from .grasps import RobotGrasp
from .transforms import Pose6D, rotvec_to_matrix

logger = logging.getLogger(__name__)

TIP_INDICES = (4, 8, 12, 16, 20)  # MANO fingertip rows


@dataclass(frozen=True)
class RetargetWeights:
    w_pen: float = 100.0
    w_fc: float = 1.0
    w_pos: float = 500.0
    w_joints: float = 10.0
    w_col: float = 50.0
    tau_col: float = 0.02  # meters
    friction_none: bool = False  # reserved

    def __post_init__(self):
        for name in ("w_pen", "w_fc", "w_pos", "w_joints", "w_col"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.tau_col <= 0:
            raise ValueError("tau_col must be positive")


@dataclass(frozen=True)
class RetargetConfig:
    learning_rate: float = 1e-2
    max_iters: int = 2000
    tol: float = 1e-8
    fd_step: float = 1e-6
    table: TablePlane | None = None


@dataclass
class RetargetResult:
    grasp: RobotGrasp
    loss_history: np.ndarray = field(repr=False)  # rows: iter, total, pen, fc, pos, joints, col
    converged: bool = False

    @property
    def final_loss(self):
        return float(self.loss_history[-1, 1])

    @property
    def iterations(self):
        return int(self.loss_history[-1, 0])


LOSS_CSV_COLUMNS = ("iteration", "total", "pen", "fc", "pos", "joints", "col")


def write_loss_csv(path, loss_history):
    rows = [",".join(LOSS_CSV_COLUMNS)]
    for row in loss_history:
        rows.append("%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g" % (int(row[0]), *row[1:]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def fd_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def _fk(model, R_w, p_w, q):
    return kernels.fk_links(
        model.parent_idx, model.origin_R, model.origin_p, model.axis_local,
        model.joint_idx, model.topo_order, R_w, p_w, q,
    )


def _world_samples(model, R, p):
    own = model.sample_owner
    return np.einsum("sij,sj->si", R[own], model.sample_points_flat) + p[own]


# -- loss terms -------------------------------------------------------------


def loss_pen(model, grasp, mesh):
    """Penetration energy: sum over link sample points of max(-sd, 0)."""
    R, p = model.fk_arrays(grasp.wrist_pose, grasp.joint_angles)
    return _pen_term(model, R, p, mesh)


def _pen_term(model, R, p, mesh):
    if model.sample_points_flat.shape[0] == 0:
        return 0.0
    sd = mesh.signed_distance(_world_samples(model, R, p))
    return float(np.maximum(-sd, 0.0).sum())


def loss_fc(contact_points, normals):
    """Wrench residual ||G c||^2 of inward unit normals at the contacts."""
    pts = np.atleast_2d(np.asarray(contact_points, dtype=float))
    nrm = np.atleast_2d(np.asarray(normals, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("no contacts")
    if pts.shape != nrm.shape:
        raise ValueError("points/normals length mismatch")
    force = nrm.sum(axis=0)
    torque = np.cross(pts, nrm).sum(axis=0)
    return float(force @ force + torque @ torque)


def contact_points_and_normals(model, wrist, q, mesh, contact_links):
    """Nearest surface point and inward normal for each contacting link.

    A link is represented by its deepest sample point (minimum signed
    distance); links without samples fall back to the frame origin. The
    inward normal is the negated outward feature normal at the nearest
    point (the SDF gradient direction wherever that is defined).
    """
    R, p = model.fk_arrays(wrist, q)
    pts, nrm = [], []
    for name in contact_links:
        li = model.link_index(name)
        mask = model.sample_owner == li
        if mask.any():
            local = model.sample_points_flat[mask]
            world = local @ R[li].T + p[li]
        else:
            world = p[li][None, :]
        sd, nearest, normal = mesh.closest(world)
        k = int(np.argmin(sd))
        pts.append(nearest[k])
        nrm.append(-normal[k])
    return np.array(pts), np.array(nrm)


def loss_pos(human, model, grasp):
    """Sum of squared human-to-robot distances over contact-flagged joints."""
    pairs = _contact_pairs(human, model, warn=True)
    R, p = model.fk_arrays(grasp.wrist_pose, grasp.joint_angles)
    return _pos_term(p, pairs, human.joint_positions)


def _contact_pairs(human, model, warn=False):
    inv_map = {v: k for k, v in model.human_map.items()}
    pairs = []
    for hj in np.nonzero(human.contacts)[0]:
        link = inv_map.get(int(hj))
        if link is None:
            if warn:
                logger.warning("contact-flagged human joint %d has no mapped link; skipped", hj)
            continue
        pairs.append((int(hj), model.link_index(link)))
    return pairs


def _pos_term(p, pairs, human_pts):
    total = 0.0
    for hj, li in pairs:
        d = human_pts[hj] - p[li]
        total += float(d @ d)
    return total


def loss_joints(model, q):
    """Joint-limit violation, radians."""
    q = np.asarray(q, dtype=float)
    over = np.maximum(q - model.limits_upper, 0.0)
    under = np.maximum(model.limits_lower - q, 0.0)
    return float(over.sum() + under.sum())


def loss_col(model, wrist, q, plane, tau):
    """Self-collision proximity over joint positions (ordered pairs) plus
    table penetration; plane=None drops the table term."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    R, p = model.fk_arrays(wrist, np.asarray(q, dtype=float))
    return _col_term(p, model.joint_idx >= 0, plane, tau)


def _col_term(p, joint_mask, plane, tau):
    jp = p[joint_mask]
    diff = jp[:, None, :] - jp[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    prox = np.maximum(tau - d, 0.0)
    np.fill_diagonal(prox, 0.0)
    total = float(prox.sum())
    if plane is not None:
        h = jp[:, 2] - plane.height
        total += float(np.maximum(-h, 0.0).sum())
    return total


# -- initialization ---------------------------------------------------------


def _kabsch(src, dst):
    # rigid R, t minimizing sum ||R src + t - dst||^2
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return R, cd - R @ cs


def _human_segment(human, hj):
    h = human.joint_positions
    seg = h[hj] - h[hj - 1] if hj in TIP_INDICES else h[hj + 1] - h[hj]
    n = np.linalg.norm(seg)
    return seg / n if n > 1e-12 else None


def _chain_dirs(model, R, p, idx):
    dirs = np.empty((len(idx), 3))
    for j in range(len(idx) - 1):
        seg = p[idx[j + 1]] - p[idx[j]]
        dirs[j] = seg / max(np.linalg.norm(seg), 1e-12)
    dirs[-1] = R[idx[-1]][:, 0]
    return dirs


def _match_finger(model, human, R_w, p_w, q, chain, iters=200, lr=0.05, fd=1e-6):
    # minimize sum(1 - cos) between robot link directions and the human
    # segment of each mapped chain link; unmapped links are free
    idx = [model.link_index(n) for n in chain]
    targets = []
    for k, name in enumerate(chain):
        hj = model.human_map.get(name)
        if hj is None or hj == 0:
            continue
        tgt = _human_segment(human, hj)
        if tgt is not None:
            targets.append((k, tgt))
    jcols = [int(model.joint_idx[i]) for i in idx if model.joint_idx[i] >= 0]
    if not targets or not jcols:
        return q
    jcols = np.array(jcols)
    lo = model.limits_lower[jcols]
    hi = model.limits_upper[jcols]

    def fobj(qf):
        qq = q.copy()
        qq[jcols] = qf
        R, p = _fk(model, R_w, p_w, qq)
        dirs = _chain_dirs(model, R, p, idx)
        return sum(1.0 - float(dirs[k] @ tgt) for k, tgt in targets)

    x = np.clip(q[jcols], lo, hi)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, iters + 1):
        g = fd_gradient(fobj, x, fd)
        if np.max(np.abs(g)) < 1e-10:
            break
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        x = np.clip(x, lo, hi)
    out = q.copy()
    out[jcols] = x
    return out


def initialize_grasp(model, human):
    """Seed G_r: Kabsch wrist alignment on mapped fingertips, then per-finger
    link-direction matching; contacts copied through human_map."""
    inv_map = {v: k for k, v in model.human_map.items()}
    tips = [(inv_map[t], t) for t in TIP_INDICES if t in inv_map]
    if len(tips) < 3:
        raise ValueError(
            f"Kabsch alignment needs at least 3 mapped fingertips, have {len(tips)}"
        )
    q0 = model.clamp(np.zeros(model.dof))
    R0, p0 = _fk(model, np.eye(3), np.zeros(3), q0)
    src = np.array([p0[model.link_index(ln)] for ln, _ in tips])
    dst = np.array([human.joint_positions[t] for _, t in tips])
    R_w, t_w = _kabsch(src, dst)

    q = q0.copy()
    for chain in model.fingers:
        q = _match_finger(model, human, R_w, t_w, q, chain)

    contacts = {}
    for name in model.contact_links:
        hj = model.human_map.get(name)
        contacts[name] = bool(human.contacts[hj]) if hj is not None else False
    return RobotGrasp(Pose6D.from_matrix(R_w, t_w), q, contacts, human.object_mesh_id)


# -- optimization -----------------------------------------------------------


def optimize_grasp(model, human, mesh, weights=None, config=None):
    """Polish an initialized grasp by minimizing the weighted loss sum."""
    weights = weights or RetargetWeights()
    config = config or RetargetConfig()
    init = initialize_grasp(model, human)
    R_init = init.wrist_pose.rotation_matrix()
    p_init = init.wrist_pose.position
    M = model.dof

    pairs = _contact_pairs(human, model, warn=True)
    contact_idx = np.array([model.link_index(n) for n in init.contact_links], dtype=np.int64)
    use_pen = weights.w_pen > 0 and mesh is not None
    use_fc = weights.w_fc > 0 and mesh is not None and len(contact_idx) > 0
    use_pos = weights.w_pos > 0 and len(pairs) > 0
    use_col = weights.w_col > 0
    zeroed = [n for n in ("w_pen", "w_fc", "w_pos", "w_joints", "w_col")
              if getattr(weights, n) == 0]
    if zeroed:
        logger.warning("zero-weight terms disabled: %s", ", ".join(zeroed))
    if mesh is None and (weights.w_pen > 0 or weights.w_fc > 0):
        logger.warning("no object mesh: skipping penetration and force-closure terms")
    if len(contact_idx) == 0 and weights.w_fc > 0:
        logger.warning("no contact links flagged: skipping force-closure term")
    if len(pairs) == 0 and weights.w_pos > 0:
        logger.warning("no mapped contact joints: skipping position term")

    joint_mask = model.joint_idx >= 0
    own = model.sample_owner
    human_pts = human.joint_positions

    def terms(theta):
        R_w = rotvec_to_matrix(theta[3:6]) @ R_init
        p_w = p_init + theta[:3]
        q = theta[6:]
        R, p = _fk(model, R_w, p_w, q)
        pen = fc = 0.0
        if use_pen or use_fc:
            world = _world_samples(model, R, p)
            sd, nearest, normal = mesh.closest(world)
            if use_pen:
                pen = float(np.maximum(-sd, 0.0).sum())
            if use_fc:
                cp = np.empty((len(contact_idx), 3))
                cn = np.empty((len(contact_idx), 3))
                for ci, li in enumerate(contact_idx):
                    mask = own == li
                    if mask.any():
                        k = np.nonzero(mask)[0][int(np.argmin(sd[mask]))]
                        cp[ci] = nearest[k]
                        cn[ci] = -normal[k]
                    else:
                        s1, n1, m1 = mesh.closest(p[li][None, :])
                        cp[ci] = n1[0]
                        cn[ci] = -m1[0]
                fc = loss_fc(cp, cn)
        pos = _pos_term(p, pairs, human_pts) if use_pos else 0.0
        joints = loss_joints(model, q)
        col = _col_term(p, joint_mask, config.table, weights.tau_col) if use_col else 0.0
        total = (
            weights.w_pen * pen + weights.w_fc * fc + weights.w_pos * pos
            + weights.w_joints * joints + weights.w_col * col
        )
        return total, (pen, fc, pos, joints, col)

    def total_only(theta):
        return terms(theta)[0]

    theta = np.zeros(6 + M)
    theta[6:] = init.joint_angles
    f_cur, t_cur = terms(theta)
    if not np.isfinite(f_cur):
        raise FloatingPointError(f"non-finite loss at initialization: terms={t_cur}")
    history = [(0, f_cur, *t_cur)]

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    t_adam = 0
    tol_hits = 0
    converged = False
    for it in range(1, config.max_iters + 1):
        g = fd_gradient(total_only, theta, config.fd_step)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient at iteration {it}; theta norm {np.linalg.norm(theta):.3e}, "
                f"terms {t_cur}"
            )
        accepted = False
        for attempt in range(2):
            if attempt == 1:
                # stale momentum can point uphill after an overshoot; restart
                # the moments so the line search runs along the raw gradient
                m[:] = 0.0
                v[:] = 0.0
                t_adam = 0
            t_adam += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            step = (
                config.learning_rate
                * (m / (1 - b1**t_adam))
                / (np.sqrt(v / (1 - b2**t_adam)) + eps)
            )
            dirderiv = float(g @ step)
            if dirderiv <= 0:
                continue  # not a descent direction
            # Armijo backtracking keeps the recorded loss strictly decreasing
            scale = 1.0
            for _ in range(40):
                cand = theta - scale * step
                f_new, t_new = terms(cand)
                if np.isnan(f_new):
                    raise FloatingPointError(
                        f"NaN loss at iteration {it} (step scale {scale:.3e}); terms {t_new}"
                    )
                if f_new <= f_cur - 1e-4 * scale * dirderiv:
                    accepted = True
                    break
                scale *= 0.5
            if accepted:
                break
        if not accepted:
            converged = True  # no sufficient descent even along the fresh gradient
            history.append((it, f_cur, *t_cur))
            break
        delta = f_cur - f_new
        theta, f_cur, t_cur = cand, f_new, t_new
        history.append((it, f_cur, *t_cur))
        # debounced stop: several consecutive sub-tol improvements
        tol_hits = tol_hits + 1 if delta < config.tol else 0
        if tol_hits >= 3:
            converged = True
            break

    q = theta[6:]
    viol = np.maximum(q - model.limits_upper, 0.0) + np.maximum(model.limits_lower - q, 0.0)
    if 0 < viol.max() <= 1e-6:
        q = model.clamp(q)  # numerical dust only; larger violations are reported as-is
    wrist = Pose6D.from_matrix(rotvec_to_matrix(theta[3:6]) @ R_init, p_init + theta[:3])
    grasp = RobotGrasp(wrist, q, dict(init.link_contacts), init.object_mesh_id)
    if not converged:
        logger.warning("retarget did not converge in %d iterations", config.max_iters)
    return RetargetResult(grasp=grasp, loss_history=np.array(history), converged=converged)
