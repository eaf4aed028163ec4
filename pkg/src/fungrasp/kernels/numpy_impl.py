"""Vectorized numpy implementations of the hot kernels.

Array-level contracts shared with numba_impl:

fk_links(parent, origin_R, origin_p, axis_local, jidx, order, wrist_R, wrist_p, q)
    -> (R (L,3,3), p (L,3)) world link frames. Root links take the wrist pose
    verbatim; children compose parent @ origin @ Rot(axis, q_joint).

gravity_torques_arrays(R, p, axis_local, jidx, mass, com_local, anc, g)
    -> (M,) gravity load per revolute joint: the gradient of gravitational
    potential energy w.r.t. q (the feedforward torque that holds the pose).

signed_closest(points, tri_verts, tri_vert_idx, tri_edge_idx, face_normals,
               vert_normals, edge_normals, bvh)
    -> (sd (P,), nearest (P,3), normal (P,3)). Sign from the angle-weighted
    pseudo-normal of the nearest feature; positive outside.

pd_rollout(q0, qd0, commands, steps_per_tick, dt, stiffness, damping, inertia,
           lo, hi, gravity_comp, g, fk_args)
    -> q_meas (N,M): joint angles at the start of each control tick.
"""

import numpy as np

# feature codes emitted by the closest-point routines
VERT_A, VERT_B, VERT_C = 0, 1, 2
EDGE_AB, EDGE_BC, EDGE_CA = 3, 4, 5
FACE = 6

_POINT_CHUNK = 128  # limits the (P, T) broadcast footprint


def _axis_rot(axis, angle):
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [x * y * t + z * s, c + y * y * t, y * z * t - x * s],
            [x * z * t - y * s, y * z * t + x * s, c + z * z * t],
        ]
    )


def fk_links(parent, origin_R, origin_p, axis_local, jidx, order, wrist_R, wrist_p, q):
    n = parent.shape[0]
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    for k in range(n):
        li = order[k]
        pa = parent[li]
        if pa < 0:
            R[li] = wrist_R
            p[li] = wrist_p
            continue
        Rp = R[pa]
        p[li] = p[pa] + Rp @ origin_p[li]
        Rl = Rp @ origin_R[li]
        j = jidx[li]
        if j >= 0:
            Rl = Rl @ _axis_rot(axis_local[li], q[j])
        R[li] = Rl
    return R, p


def gravity_torques_arrays(R, p, axis_local, jidx, mass, com_local, anc, g):
    n_links = R.shape[0]
    coms = p + np.einsum("lij,lj->li", R, com_local)
    tau = np.zeros(anc.shape[0])
    for li in range(n_links):
        j = jidx[li]
        if j < 0:
            continue
        a_world = R[li] @ axis_local[li]
        rel = coms - p[li]
        moments = np.cross(np.broadcast_to(g, rel.shape), rel)
        tau[j] = np.sum(anc[j] * mass * (moments @ a_world))
    return tau


def _closest_point_block(points, a, b, c):
    """Closest points on triangles for every (point, triangle) pair.

    points (P,3); a,b,c (T,3). Returns sqdist (P,T), nearest (P,T,3),
    code (P,T) per the feature-code constants.
    """
    P = points.shape[0]
    T = a.shape[0]
    ab = b - a
    ac = c - a
    ap = points[:, None, :] - a[None, :, :]
    d1 = np.einsum("tk,ptk->pt", ab, ap)
    d2 = np.einsum("tk,ptk->pt", ac, ap)
    bp = points[:, None, :] - b[None, :, :]
    d3 = np.einsum("tk,ptk->pt", ab, bp)
    d4 = np.einsum("tk,ptk->pt", ac, bp)
    cp = points[:, None, :] - c[None, :, :]
    d5 = np.einsum("tk,ptk->pt", ab, cp)
    d6 = np.einsum("tk,ptk->pt", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    nearest = np.empty((P, T, 3))
    code = np.full((P, T), FACE, dtype=np.int8)
    unset = np.ones((P, T), dtype=bool)

    def assign(mask, pts, feat):
        m = mask & unset
        nearest[m] = pts[m] if pts.ndim == 3 else np.broadcast_to(pts, (P, T, 3))[m]
        code[m] = feat
        unset[m] = False

    assign((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, (P, T, 3)), VERT_A)
    assign((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, (P, T, 3)), VERT_B)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
    assign(
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        a[None] + np.nan_to_num(v_ab)[..., None] * ab[None],
        EDGE_AB,
    )
    assign((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, (P, T, 3)), VERT_C)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ca = d2 / (d2 - d6)
    assign(
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        a[None] + np.nan_to_num(v_ca)[..., None] * ac[None],
        EDGE_CA,
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        v_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    assign(
        (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
        b[None] + np.nan_to_num(v_bc)[..., None] * (c - b)[None],
        EDGE_BC,
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    face_pts = a[None] + v[..., None] * ab[None] + w[..., None] * ac[None]
    nearest[unset] = face_pts[unset]

    diff = points[:, None, :] - nearest
    sqd = np.einsum("ptk,ptk->pt", diff, diff)
    return sqd, nearest, code


def _feature_normal(code, tri, tri_vert_idx, tri_edge_idx, face_normals, vert_normals, edge_normals):
    if code == FACE:
        return face_normals[tri]
    if code < 3:
        return vert_normals[tri_vert_idx[tri, code]]
    return edge_normals[tri_edge_idx[tri, code - 3]]


def signed_closest(
    points,
    tri_verts,
    tri_vert_idx,
    tri_edge_idx,
    face_normals,
    vert_normals,
    edge_normals,
    bvh,
):
    del bvh  # exact scan over all triangles; the numba backend prunes instead
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P = points.shape[0]
    a, b, c = tri_verts[:, 0], tri_verts[:, 1], tri_verts[:, 2]

    sd = np.empty(P)
    nearest = np.empty((P, 3))
    normal = np.empty((P, 3))
    for s in range(0, P, _POINT_CHUNK):
        blk = slice(s, min(s + _POINT_CHUNK, P))
        sqd, near, code = _closest_point_block(points[blk], a, b, c)
        best = np.argmin(sqd, axis=1)
        rows = np.arange(sqd.shape[0])
        np_best = near[rows, best]
        nearest[blk] = np_best
        for i, tri in enumerate(best):
            n = _feature_normal(
                code[i, tri], tri, tri_vert_idx, tri_edge_idx,
                face_normals, vert_normals, edge_normals,
            )
            normal[s + i] = n
            d = np.sqrt(sqd[i, tri])
            outside = np.dot(points[s + i] - np_best[i], n) >= 0.0
            sd[s + i] = d if outside else -d
    return sd, nearest, normal


def pd_rollout(
    q0,
    qd0,
    commands,
    steps_per_tick,
    dt,
    stiffness,
    damping,
    inertia,
    lo,
    hi,
    gravity_comp,
    g,
    fk_args,
):
    """Semi-implicit Euler PD rollout with zero-order-held commands.

    fk_args = (parent, origin_R, origin_p, axis_local, jidx, order, mass,
    com_local, anc, wrist_R, wrist_p); gravity torques are skipped entirely
    when compensation is on (feedforward cancels the load exactly) or g = 0.
    """
    n_ticks = commands.shape[0]
    q = q0.copy()
    qd = qd0.copy()
    q_meas = np.empty_like(commands)
    (parent, origin_R, origin_p, axis_local, jidx, order, mass, com_local, anc,
     wrist_R, wrist_p) = fk_args
    need_gravity = (not gravity_comp) and bool(np.any(g != 0.0)) and bool(np.any(mass > 0))
    for k in range(n_ticks):
        q_meas[k] = q
        target = commands[k]
        for _ in range(steps_per_tick):
            tau = stiffness * (target - q) - damping * qd
            if need_gravity:
                R, p = fk_links(
                    parent, origin_R, origin_p, axis_local, jidx, order,
                    wrist_R, wrist_p, q,
                )
                tau = tau - gravity_torques_arrays(
                    R, p, axis_local, jidx, mass, com_local, anc, g
                )
            qd = qd + (tau / inertia) * dt
            q = q + qd * dt
            below = q < lo
            above = q > hi
            if np.any(below) or np.any(above):
                q = np.clip(q, lo, hi)
                qd[below | above] = 0.0
        if not np.all(np.isfinite(q)):
            raise FloatingPointError(f"rollout diverged at tick {k}")
    return q_meas, q, qd
