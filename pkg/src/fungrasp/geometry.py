"""Watertight triangle-mesh objects, signed distances, and the table plane.

Signed distance uses the angle-weighted pseudo-normal of the closest
feature (vertex, edge, or face) to decide sign, so it is exact for any
watertight mesh with consistent outward winding. Queries go through an
AABB tree (median split) on the accelerated backend and a chunked
all-triangles scan on the plain-numpy one.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-14
BVH_LEAF_SIZE = 4
CONTACT_THRESHOLD = 0.005  # meters


class MeshError(ValueError):
    """Mesh fails the closed-manifold requirements."""


def _build_bvh(tri_min, tri_max, leaf_size=BVH_LEAF_SIZE):
    # flattened median-split AABB tree; leaf iff left < 0
    F = tri_min.shape[0]
    centroids = 0.5 * (tri_min + tri_max)
    tri_order = np.arange(F, dtype=np.int64)
    bb_min, bb_max, left, right, start, count = [], [], [], [], [], []

    def new_node():
        bb_min.append(None)
        bb_max.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    stack = [(0, F, new_node())]
    while stack:
        lo, hi, ni = stack.pop()
        idx = tri_order[lo:hi]
        bb_min[ni] = tri_min[idx].min(axis=0)
        bb_max[ni] = tri_max[idx].max(axis=0)
        cen = centroids[idx]
        ext = cen.max(axis=0) - cen.min(axis=0)
        ax = int(np.argmax(ext))
        if hi - lo <= leaf_size or ext[ax] < 1e-12:
            start[ni] = lo
            count[ni] = hi - lo
            continue
        tri_order[lo:hi] = idx[np.argsort(cen[:, ax], kind="stable")]
        mid = (lo + hi) // 2
        left[ni] = new_node()
        right[ni] = new_node()
        stack.append((lo, mid, left[ni]))
        stack.append((mid, hi, right[ni]))
    return (
        np.array(bb_min),
        np.array(bb_max),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(count, dtype=np.int64),
        tri_order,
    )


class TriMeshObject:
    """Closed, consistently wound triangle mesh (vertices in meters)."""

    def __init__(self, vertices, faces, mesh_id=""):
        v = np.array(vertices, dtype=float)
        f = np.array(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 4:
            raise MeshError(f"vertices must be (V>=4, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) < 4:
            raise MeshError(f"faces must be (F>=4, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError("face index out of range")
        self.vertices = v
        self.faces = f
        self.mesh_id = str(mesh_id)
        self._validate_and_build()
        for a in (self.vertices, self.faces):
            a.flags.writeable = False

    def _validate_and_build(self):
        v, f = self.vertices, self.faces
        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        raw = np.cross(b - a, c - a)
        areas2 = np.linalg.norm(raw, axis=1)
        if np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) or np.any(f[:, 2] == f[:, 0]):
            raise MeshError("face repeats a vertex index")
        bad = np.nonzero(areas2 < 2 * DEGENERATE_AREA)[0]
        if len(bad):
            raise MeshError(f"degenerate face {bad[0]} (area ~ 0)")
        face_normals = raw / areas2[:, None]

        # undirected edge table; watertight + consistent winding checks
        edge_id = {}
        directed = set()
        edge_faces = []
        tri_edge_idx = np.empty_like(f)
        for fi in range(len(f)):
            tri = f[fi]
            for k in range(3):
                u, w = int(tri[k]), int(tri[(k + 1) % 3])
                if (u, w) in directed:
                    raise MeshError(f"directed edge ({u},{w}) repeated: inconsistent winding")
                directed.add((u, w))
                key = (u, w) if u < w else (w, u)
                ei = edge_id.get(key)
                if ei is None:
                    ei = len(edge_faces)
                    edge_id[key] = ei
                    edge_faces.append([fi, -1])
                else:
                    if edge_faces[ei][1] != -1:
                        raise MeshError(f"edge {key} shared by more than two faces")
                    edge_faces[ei][1] = fi
                tri_edge_idx[fi, k] = ei
        open_edges = [k for k, (f0, f1) in zip(edge_id, edge_faces) if f1 == -1]
        if open_edges:
            raise MeshError(f"mesh is not watertight: open edge {open_edges[0]}")
        for key in edge_id:
            if (key[1], key[0]) not in directed:
                raise MeshError(f"edge {key} traversed twice in the same direction")

        # outward orientation: divergence-theorem volume must be positive
        vol = float(np.einsum("ij,ij->", a, np.cross(b, c))) / 6.0
        if vol <= 0:
            raise MeshError(f"winding points inward (signed volume {vol:.3e})")
        self.volume = vol

        # angle-weighted vertex pseudo-normals
        vert_normals = np.zeros_like(v)
        for k, (p0, p1, p2) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
            e1 = p1 - p0
            e2 = p2 - p0
            cosang = np.einsum("ij,ij->i", e1, e2) / (
                np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
            )
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            np.add.at(vert_normals, f[:, k], ang[:, None] * face_normals)
        norms = np.linalg.norm(vert_normals, axis=1)
        if np.any(norms < 1e-14):
            raise MeshError("vertex with vanishing pseudo-normal")
        vert_normals /= norms[:, None]

        ef = np.array(edge_faces, dtype=np.int64)
        edge_normals = face_normals[ef[:, 0]] + face_normals[ef[:, 1]]
        en = np.linalg.norm(edge_normals, axis=1)
        flat = en < 1e-14  # opposing coplanar faces; direction is irrelevant for sign there
        edge_normals[flat] = face_normals[ef[flat, 0]]
        edge_normals[~flat] /= en[~flat, None]

        self.face_normals = face_normals
        self.vert_normals = vert_normals
        self.edge_normals = edge_normals
        self.tri_edge_idx = tri_edge_idx
        self.tri_verts = np.ascontiguousarray(np.stack((a, b, c), axis=1))
        tri_min = self.tri_verts.min(axis=1)
        tri_max = self.tri_verts.max(axis=1)
        self.bvh = _build_bvh(tri_min, tri_max)
        cen = (a + b + c) / 4.0  # centroid of the origin-apex tetrahedron
        w = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
        self.centroid = (w[:, None] * cen).sum(axis=0) / vol

    @property
    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def closest(self, points):
        """(signed distance, nearest surface point, outward feature normal)
        for each query point. Negative inside."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        sd, nearest, normal = kernels.signed_closest(
            np.ascontiguousarray(p),
            self.tri_verts,
            self.faces,
            self.tri_edge_idx,
            self.face_normals,
            self.vert_normals,
            self.edge_normals,
            self.bvh,
        )
        return sd, nearest, normal

    def signed_distance(self, points):
        points = np.asarray(points, dtype=float)
        sd, _, _ = self.closest(points)
        return float(sd[0]) if points.ndim == 1 else sd

    def nearest_point(self, points):
        points = np.asarray(points, dtype=float)
        _, nearest, _ = self.closest(points)
        return nearest[0] if points.ndim == 1 else nearest

    def sdf_gradient(self, points):
        """Unit gradient of the signed distance, (p - nearest) / sd.
        Falls back to the feature pseudo-normal on the surface itself."""
        points = np.asarray(points, dtype=float)
        p = np.atleast_2d(points)
        sd, nearest, normal = self.closest(p)
        grad = np.where(
            np.abs(sd)[:, None] > 1e-9, (p - nearest) / np.where(sd == 0, 1.0, sd)[:, None], normal
        )
        return grad[0] if points.ndim == 1 else grad


def signed_distance(mesh, points):
    return mesh.signed_distance(points)


def nearest_point(mesh, points):
    return mesh.nearest_point(points)


def sdf_gradient(mesh, points):
    return mesh.sdf_gradient(points)


def derive_contacts(model, wrist_pose, joint_angles, mesh, threshold=CONTACT_THRESHOLD):
    """Per-link contact flags: a link touches when any of its sample points
    sits within `threshold` of the surface (penetration counts)."""
    flags = {l.name: False for l in model.links}
    if model.sample_points_flat.shape[0] == 0:
        logger.warning("model %s has no sample points; no contacts derivable", model.name)
        return flags
    R, p = model.fk_arrays(wrist_pose, np.asarray(joint_angles, dtype=float))
    own = model.sample_owner
    world = np.einsum("sij,sj->si", R[own], model.sample_points_flat) + p[own]
    sd = mesh.signed_distance(world)
    for i, l in enumerate(model.links):
        mask = own == i
        if mask.any() and sd[mask].min() <= threshold:
            flags[l.name] = True
    return flags


@dataclass(frozen=True)
class TablePlane:
    """Horizontal support surface z = height (world frame, z up)."""

    height: float = 0.0


def table_distance(points, table):
    """Height of each point above the table surface (negative below)."""
    points = np.asarray(points, dtype=float)
    return points[..., 2] - table.height


# -- Wavefront OBJ (v / f only; quads split 0-1-2 / 0-2-3) ------------------


class ObjError(ValueError):
    """Unparseable OBJ content."""


def parse_obj(text, mesh_id=""):
    vertices = []
    faces = []
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjError(f"line {ln}: vertex needs 3 coordinates")
            vertices.append([float(x) for x in parts[1:4]])
        elif tag == "f":
            idx = []
            for tok in parts[1:]:
                s = tok.split("/")[0]
                i = int(s)
                if i < 0:
                    raise ObjError(f"line {ln}: negative indices are not supported")
                if i == 0:
                    raise ObjError(f"line {ln}: OBJ indices are 1-based")
                idx.append(i - 1)
            if len(idx) == 3:
                faces.append(idx)
            elif len(idx) == 4:
                faces.append([idx[0], idx[1], idx[2]])
                faces.append([idx[0], idx[2], idx[3]])
            else:
                raise ObjError(f"line {ln}: only triangles and quads are supported")
        # other directives (vn, vt, o, g, s, usemtl, mtllib) carry no geometry here
    if not vertices or not faces:
        raise ObjError("no geometry found")
    return TriMeshObject(vertices, faces, mesh_id=mesh_id)


def load_obj(path, mesh_id=None):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_obj(text, mesh_id=str(path) if mesh_id is None else mesh_id)


def save_obj(mesh, path):
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
