"""JIT-compiled implementations of the hot kernels (see numpy_impl for contracts).

The mesh query walks a bounding-volume hierarchy instead of scanning all
triangles; results are exact and match the numpy backend to roundoff.
"""

import numpy as np
from numba import njit

VERT_A, VERT_B, VERT_C = 0, 1, 2
EDGE_AB, EDGE_BC, EDGE_CA = 3, 4, 5
FACE = 6


@njit(cache=True, inline="always")
def _mat3_mul(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(cache=True, inline="always")
def _mat3_vec(A, v, out):
    for i in range(3):
        out[i] = A[i, 0] * v[0] + A[i, 1] * v[1] + A[i, 2] * v[2]


@njit(cache=True)
def _axis_rot(axis, angle, out):
    x, y, z = axis[0], axis[1], axis[2]
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    out[0, 0] = c + x * x * t
    out[0, 1] = x * y * t - z * s
    out[0, 2] = x * z * t + y * s
    out[1, 0] = x * y * t + z * s
    out[1, 1] = c + y * y * t
    out[1, 2] = y * z * t - x * s
    out[2, 0] = x * z * t - y * s
    out[2, 1] = y * z * t + x * s
    out[2, 2] = c + z * z * t


@njit(cache=True)
def fk_links(parent, origin_R, origin_p, axis_local, jidx, order, wrist_R, wrist_p, q):
    n = parent.shape[0]
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    tmp = np.empty((3, 3))
    rot = np.empty((3, 3))
    for k in range(n):
        li = order[k]
        pa = parent[li]
        if pa < 0:
            for i in range(3):
                p[li, i] = wrist_p[i]
                for j in range(3):
                    R[li, i, j] = wrist_R[i, j]
            continue
        _mat3_vec(R[pa], origin_p[li], p[li])
        for i in range(3):
            p[li, i] += p[pa, i]
        _mat3_mul(R[pa], origin_R[li], tmp)
        j = jidx[li]
        if j >= 0:
            _axis_rot(axis_local[li], q[j], rot)
            _mat3_mul(tmp, rot, R[li])
        else:
            for i in range(3):
                for jj in range(3):
                    R[li, i, jj] = tmp[i, jj]
    return R, p


@njit(cache=True)
def gravity_torques_arrays(R, p, axis_local, jidx, mass, com_local, anc, g):
    n_links = R.shape[0]
    n_joints = anc.shape[0]
    coms = np.empty((n_links, 3))
    cw = np.empty(3)
    for li in range(n_links):
        _mat3_vec(R[li], com_local[li], cw)
        for i in range(3):
            coms[li, i] = p[li, i] + cw[i]
    tau = np.zeros(n_joints)
    a_world = np.empty(3)
    for li in range(n_links):
        j = jidx[li]
        if j < 0:
            continue
        _mat3_vec(R[li], axis_local[li], a_world)
        acc = 0.0
        for lk in range(n_links):
            if anc[j, lk] == 0 or mass[lk] == 0.0:
                continue
            rx = coms[lk, 0] - p[li, 0]
            ry = coms[lk, 1] - p[li, 1]
            rz = coms[lk, 2] - p[li, 2]
            mx = g[1] * rz - g[2] * ry
            my = g[2] * rx - g[0] * rz
            mz = g[0] * ry - g[1] * rx
            acc += mass[lk] * (a_world[0] * mx + a_world[1] * my + a_world[2] * mz)
        tau[j] = acc
    return tau


@njit(cache=True)
def _closest_point_triangle(a, b, c, pnt, near):
    """Region-based closest point (Ericson). Fills near, returns (sqdist, code)."""
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = pnt[0] - a[0], pnt[1] - a[1], pnt[2] - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        near[0], near[1], near[2] = a[0], a[1], a[2]
        code = VERT_A
    else:
        bpx, bpy, bpz = pnt[0] - b[0], pnt[1] - b[1], pnt[2] - b[2]
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            near[0], near[1], near[2] = b[0], b[1], b[2]
            code = VERT_B
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                near[0] = a[0] + v * abx
                near[1] = a[1] + v * aby
                near[2] = a[2] + v * abz
                code = EDGE_AB
            else:
                cpx, cpy, cpz = pnt[0] - c[0], pnt[1] - c[1], pnt[2] - c[2]
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    near[0], near[1], near[2] = c[0], c[1], c[2]
                    code = VERT_C
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        near[0] = a[0] + w * acx
                        near[1] = a[1] + w * acy
                        near[2] = a[2] + w * acz
                        code = EDGE_CA
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            near[0] = b[0] + w * (c[0] - b[0])
                            near[1] = b[1] + w * (c[1] - b[1])
                            near[2] = b[2] + w * (c[2] - b[2])
                            code = EDGE_BC
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            near[0] = a[0] + abx * v + acx * w
                            near[1] = a[1] + aby * v + acy * w
                            near[2] = a[2] + abz * v + acz * w
                            code = FACE
    dx = pnt[0] - near[0]
    dy = pnt[1] - near[1]
    dz = pnt[2] - near[2]
    return dx * dx + dy * dy + dz * dz, code


@njit(cache=True, inline="always")
def _box_sqdist(bb_min, bb_max, pnt):
    d = 0.0
    for i in range(3):
        lo = bb_min[i] - pnt[i]
        hi = pnt[i] - bb_max[i]
        e = lo if lo > hi else hi
        if e > 0.0:
            d += e * e
    return d


@njit(cache=True, nogil=True)
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
    bb_min, bb_max, left, right, start, count, tri_order = bvh
    P = points.shape[0]
    sd = np.empty(P)
    nearest = np.empty((P, 3))
    normal = np.empty((P, 3))
    stack = np.empty(128, dtype=np.int64)
    cand = np.empty(3)
    for pi in range(P):
        pnt = points[pi]
        best = np.inf
        best_tri = -1
        best_code = FACE
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_sqdist(bb_min[node], bb_max[node], pnt) >= best:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    t = tri_order[k]
                    sq, code = _closest_point_triangle(
                        tri_verts[t, 0], tri_verts[t, 1], tri_verts[t, 2], pnt, cand
                    )
                    if sq < best:
                        best = sq
                        best_tri = t
                        best_code = code
                        nearest[pi, 0] = cand[0]
                        nearest[pi, 1] = cand[1]
                        nearest[pi, 2] = cand[2]
            else:
                l = left[node]
                r = right[node]
                dl = _box_sqdist(bb_min[l], bb_max[l], pnt)
                dr = _box_sqdist(bb_min[r], bb_max[r], pnt)
                if dl <= dr:
                    stack[sp] = r
                    sp += 1
                    stack[sp] = l
                    sp += 1
                else:
                    stack[sp] = l
                    sp += 1
                    stack[sp] = r
                    sp += 1
        if best_code == FACE:
            nrm = face_normals[best_tri]
        elif best_code < 3:
            nrm = vert_normals[tri_vert_idx[best_tri, best_code]]
        else:
            nrm = edge_normals[tri_edge_idx[best_tri, best_code - 3]]
        dot = 0.0
        for i in range(3):
            normal[pi, i] = nrm[i]
            dot += (pnt[i] - nearest[pi, i]) * nrm[i]
        d = np.sqrt(best)
        sd[pi] = d if dot >= 0.0 else -d
    return sd, nearest, normal


@njit(cache=True)
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
    parent, origin_R, origin_p, axis_local, jidx, order, mass, com_local, anc, wrist_R, wrist_p = fk_args
    n_ticks = commands.shape[0]
    M = q0.shape[0]
    q = q0.copy()
    qd = qd0.copy()
    q_meas = np.empty((n_ticks, M))
    g_nonzero = g[0] != 0.0 or g[1] != 0.0 or g[2] != 0.0
    need_gravity = (not gravity_comp) and g_nonzero and np.any(mass > 0.0)
    tau_g = np.zeros(M)
    for k in range(n_ticks):
        for j in range(M):
            q_meas[k, j] = q[j]
        target = commands[k]
        for _ in range(steps_per_tick):
            if need_gravity:
                R, p = fk_links(
                    parent, origin_R, origin_p, axis_local, jidx, order,
                    wrist_R, wrist_p, q,
                )
                tau_g = gravity_torques_arrays(
                    R, p, axis_local, jidx, mass, com_local, anc, g
                )
            for j in range(M):
                tau = stiffness[j] * (target[j] - q[j]) - damping[j] * qd[j]
                if need_gravity:
                    tau -= tau_g[j]
                qd[j] = qd[j] + (tau / inertia[j]) * dt
                q[j] = q[j] + qd[j] * dt
                if q[j] < lo[j]:
                    q[j] = lo[j]
                    qd[j] = 0.0
                elif q[j] > hi[j]:
                    q[j] = hi[j]
                    qd[j] = 0.0
        for j in range(M):
            if not np.isfinite(q[j]):
                raise FloatingPointError("rollout diverged")
    return q_meas, q, qd
