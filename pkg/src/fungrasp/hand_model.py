"""Robot-hand kinematic model: description parsing, forward kinematics,
link directions, and position Jacobians.

The description format is a strict JSON document (UTF-8):

    {
      "name": "...",
      "links": [
        {"name": "...", "parent": null | "link",
         "joint": {"joint_type": "revolute" | "fixed",
                   "axis": [x, y, z],           # unit, joint frame
                   "origin_xyz": [x, y, z],     # meters, parent frame
                   "origin_rpy": [r, p, y],     # radians, fixed-axis
                   "limit_lower": rad, "limit_upper": rad},  # revolute only
         "mass": kg, "com": [x, y, z],          # link frame
         "sample_points": [[x, y, z], ...]},    # link frame; nonempty marks
        ...                                     # the link contact-capable
      ],
      "fingers": [["base_link", ..., "tip_link"], ...],
      "human_map": {"link": 0-20, ...}
    }

Unknown keys anywhere are a hard error. Exactly one link has parent null
(the wrist/root); it must be a fixed joint. Finger chains list direct
parent->child links, base to tip. Joint angles q index the revolute links
in document order.

Human hands are 21 keypoints in MANO order: wrist (0), then per finger
(thumb, index, middle, ring, pinky) four joints base->tip.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .transforms import Pose6D, rpy_to_matrix

logger = logging.getLogger(__name__)

AXIS_TOL = 1e-9

MANO_JOINT_NAMES = (
    "wrist",
    "thumb_mcp", "thumb_pip", "thumb_dip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)


class DescriptionError(ValueError):
    """Invalid robot-hand description document."""


@dataclass(frozen=True)
class Link:
    name: str
    parent: str | None
    joint_type: str  # "revolute" | "fixed"
    axis: np.ndarray
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray
    limit_lower: float
    limit_upper: float
    mass: float
    com: np.ndarray
    sample_points: np.ndarray  # (S, 3), possibly empty

    def __post_init__(self):
        for attr, shape in (("axis", (3,)), ("origin_xyz", (3,)), ("origin_rpy", (3,)), ("com", (3,))):
            a = np.array(getattr(self, attr), dtype=float).reshape(shape)
            a.flags.writeable = False
            object.__setattr__(self, attr, a)
        sp = np.array(self.sample_points, dtype=float).reshape(-1, 3)
        sp.flags.writeable = False
        object.__setattr__(self, "sample_points", sp)

    @property
    def contact_capable(self):
        return self.sample_points.shape[0] > 0


class RobotHandModel:
    """Kinematic tree of links rooted at a single wrist link.

    Immutable after construction; all queries are pure functions.
    """

    def __init__(self, name, links, fingers, human_map):
        self.name = name
        self.links = tuple(links)
        self.fingers = tuple(tuple(f) for f in fingers)
        self.human_map = dict(human_map)
        self._index = {l.name: i for i, l in enumerate(self.links)}
        if len(self._index) != len(self.links):
            raise DescriptionError("duplicate link names")
        self._validate_tree()
        self._validate_joints()
        self._validate_fingers()
        self._validate_human_map()
        self.joint_links = tuple(l.name for l in self.links if l.joint_type == "revolute")
        self.dof = len(self.joint_links)
        self.contact_links = tuple(l.name for l in self.links if l.contact_capable)
        self._build_arrays()

    # -- validation -------------------------------------------------------

    def _validate_tree(self):
        roots = [l for l in self.links if l.parent is None]
        if len(roots) != 1:
            raise DescriptionError(f"expected exactly one root link, found {len(roots)}")
        self.root = roots[0].name
        if roots[0].joint_type != "fixed":
            raise DescriptionError("root (wrist) link must have a fixed joint")
        for l in self.links:
            if l.parent is not None and l.parent not in self._index:
                raise DescriptionError(f"link {l.name!r} references unknown parent {l.parent!r}")
        # cycle check by walking to the root from every link
        for l in self.links:
            seen = set()
            cur = l
            while cur.parent is not None:
                if cur.name in seen:
                    raise DescriptionError(f"cycle in link tree at {cur.name!r}")
                seen.add(cur.name)
                cur = self.links[self._index[cur.parent]]

    def _validate_joints(self):
        for l in self.links:
            if l.joint_type not in ("revolute", "fixed"):
                raise DescriptionError(f"link {l.name!r}: unknown joint_type {l.joint_type!r}")
            if abs(np.linalg.norm(l.axis) - 1.0) > AXIS_TOL:
                raise DescriptionError(f"link {l.name!r}: non-unit axis {l.axis.tolist()}")
            if l.mass < 0:
                raise DescriptionError(f"link {l.name!r}: negative mass")
            if l.joint_type == "revolute" and not l.limit_lower < l.limit_upper:
                raise DescriptionError(
                    f"link {l.name!r}: revolute joint needs limit_lower < limit_upper"
                )

    def _validate_fingers(self):
        for chain in self.fingers:
            for name in chain:
                if name not in self._index:
                    raise DescriptionError(f"finger chain references unknown link {name!r}")
            for a, b in zip(chain, chain[1:]):
                if self.links[self._index[b]].parent != a:
                    raise DescriptionError(
                        f"finger chain broken: {b!r} is not a child of {a!r}"
                    )

    def _validate_human_map(self):
        seen = {}
        for name, idx in self.human_map.items():
            if name not in self._index:
                raise DescriptionError(f"human_map references unknown link {name!r}")
            if not 0 <= idx <= 20:
                raise DescriptionError(f"human_map[{name!r}] = {idx} outside 0..20")
            if idx in seen:
                raise DescriptionError(
                    f"human joint {idx} mapped twice ({seen[idx]!r}, {name!r})"
                )
            seen[idx] = name

    # -- flattened arrays for the kernels ---------------------------------

    def _build_arrays(self):
        L = len(self.links)
        parent = np.full(L, -1, dtype=np.int64)
        origin_R = np.empty((L, 3, 3))
        origin_p = np.empty((L, 3))
        axis = np.empty((L, 3))
        jidx = np.full(L, -1, dtype=np.int64)
        mass = np.empty(L)
        com = np.empty((L, 3))
        nj = 0
        for i, l in enumerate(self.links):
            parent[i] = self._index[l.parent] if l.parent is not None else -1
            origin_R[i] = rpy_to_matrix(l.origin_rpy)
            origin_p[i] = l.origin_xyz
            axis[i] = l.axis
            mass[i] = l.mass
            com[i] = l.com
            if l.joint_type == "revolute":
                jidx[i] = nj
                nj += 1
        # topological order (parents before children)
        order = []
        remaining = set(range(L))
        placed = set()
        while remaining:
            progressed = False
            for i in sorted(remaining):
                if parent[i] < 0 or parent[i] in placed:
                    order.append(i)
                    placed.add(i)
                    remaining.discard(i)
                    progressed = True
            if not progressed:  # unreachable after cycle validation
                raise DescriptionError("link tree is not a forest")
        order = np.array(order, dtype=np.int64)
        # ancestor-or-self mask per revolute joint
        anc = np.zeros((nj, L), dtype=np.uint8)
        for i in range(L):
            cur = i
            while cur >= 0:
                j = jidx[cur]
                if j >= 0:
                    anc[j, i] = 1
                cur = parent[cur]
        limits_lo = np.array(
            [l.limit_lower for l in self.links if l.joint_type == "revolute"], dtype=float
        )
        limits_hi = np.array(
            [l.limit_upper for l in self.links if l.joint_type == "revolute"], dtype=float
        )
        for a in (parent, origin_R, origin_p, axis, jidx, mass, com, order, anc, limits_lo, limits_hi):
            a.flags.writeable = False
        self.parent_idx = parent
        self.origin_R = origin_R
        self.origin_p = origin_p
        self.axis_local = axis
        self.joint_idx = jidx
        self.topo_order = order
        self.link_mass = mass
        self.link_com = com
        self.ancestor_mask = anc
        self.limits_lower = limits_lo
        self.limits_upper = limits_hi
        # flattened contact sample points
        pts = [l.sample_points for l in self.links]
        owners = [np.full(len(p), i, dtype=np.int64) for i, p in enumerate(pts)]
        self.sample_points_flat = (
            np.vstack([p for p in pts if len(p)]) if any(len(p) for p in pts) else np.zeros((0, 3))
        )
        self.sample_owner = (
            np.concatenate([o for o in owners if len(o)])
            if any(len(o) for o in owners)
            else np.zeros(0, dtype=np.int64)
        )
        self.sample_points_flat.flags.writeable = False
        self.sample_owner.flags.writeable = False

    # -- queries -----------------------------------------------------------

    def link_index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown link {name!r}") from None

    def fk_arrays(self, wrist, q):
        """World rotation (L,3,3) and position (L,3) of every link frame."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint angles, got shape {q.shape}")
        return kernels.fk_links(
            self.parent_idx, self.origin_R, self.origin_p, self.axis_local,
            self.joint_idx, self.topo_order,
            wrist.rotation_matrix(), wrist.position, q,
        )

    def clamp(self, q):
        return np.clip(q, self.limits_lower, self.limits_upper)


def forward_kinematics(model, wrist, q):
    """Per-link world poses, keyed by link name. Wrist link pose == wrist."""
    R, p = model.fk_arrays(wrist, q)
    return {l.name: Pose6D.from_matrix(R[i], p[i]) for i, l in enumerate(model.links)}


def link_directions(model, wrist, q):
    """Per finger, one unit direction per link.

    Direction j points from frame j to frame j+1; the fingertip link's
    direction is its local +x axis (into the tip point).
    """
    R, p = model.fk_arrays(wrist, q)
    out = []
    for chain in model.fingers:
        if len(chain) < 2:
            raise ValueError(f"finger chain {chain} has fewer than 2 frames")
        idx = [model.link_index(n) for n in chain]
        dirs = np.empty((len(chain), 3))
        for j in range(len(chain) - 1):
            seg = p[idx[j + 1]] - p[idx[j]]
            n = np.linalg.norm(seg)
            if n < 1e-12:
                raise ValueError(
                    f"coincident frames {chain[j]!r}/{chain[j + 1]!r} give a zero-length segment"
                )
            dirs[j] = seg / n
        dirs[-1] = R[idx[-1]][:, 0]
        out.append(dirs)
    return out


def position_jacobian(model, wrist, q, link):
    """3 x M Jacobian of the link frame origin w.r.t. the joint angles."""
    li = model.link_index(link)
    R, p = model.fk_arrays(wrist, q)
    J = np.zeros((3, model.dof))
    cur = model.parent_idx[li]  # own joint rotates about its own origin: zero column
    while cur >= 0:
        j = model.joint_idx[cur]
        if j >= 0:
            axis_world = R[cur] @ model.axis_local[cur]
            J[:, j] = np.cross(axis_world, p[li] - p[cur])
        cur = model.parent_idx[cur]
    return J


# -- description document parsing / serialization --------------------------

_LINK_KEYS = {"name", "parent", "joint", "mass", "com", "sample_points"}
_JOINT_KEYS = {"joint_type", "axis", "origin_xyz", "origin_rpy", "limit_lower", "limit_upper"}
_TOP_KEYS = {"name", "links", "fingers", "human_map"}


def _require_keys(obj, allowed, required, where):
    unknown = set(obj) - allowed
    if unknown:
        raise DescriptionError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise DescriptionError(f"{where}: missing keys {sorted(missing)}")


def _vec3(v, where):
    if not (isinstance(v, list) and len(v) == 3):
        raise DescriptionError(f"{where}: expected a 3-vector")
    return [float(x) for x in v]


def parse_robot_description(text):
    """Parse a robot-hand description document (strict)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DescriptionError(f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise DescriptionError("top level must be an object")
    _require_keys(doc, _TOP_KEYS, _TOP_KEYS, "top level")
    links = []
    for i, entry in enumerate(doc["links"]):
        where = f"links[{i}]"
        _require_keys(entry, _LINK_KEYS, _LINK_KEYS, where)
        joint = entry["joint"]
        _require_keys(
            joint, _JOINT_KEYS, {"joint_type", "axis", "origin_xyz", "origin_rpy"}, f"{where}.joint"
        )
        jt = joint["joint_type"]
        if jt == "revolute":
            if "limit_lower" not in joint or "limit_upper" not in joint:
                raise DescriptionError(f"{where}: missing limit on revolute joint")
            lo, hi = float(joint["limit_lower"]), float(joint["limit_upper"])
        else:
            lo = float(joint.get("limit_lower", 0.0))
            hi = float(joint.get("limit_upper", 0.0))
        links.append(
            Link(
                name=str(entry["name"]),
                parent=entry["parent"] if entry["parent"] is None else str(entry["parent"]),
                joint_type=jt,
                axis=_vec3(joint["axis"], f"{where}.joint.axis"),
                origin_xyz=_vec3(joint["origin_xyz"], f"{where}.joint.origin_xyz"),
                origin_rpy=_vec3(joint["origin_rpy"], f"{where}.joint.origin_rpy"),
                limit_lower=lo,
                limit_upper=hi,
                mass=float(entry["mass"]),
                com=_vec3(entry["com"], f"{where}.com"),
                sample_points=[_vec3(p, f"{where}.sample_points") for p in entry["sample_points"]],
            )
        )
    human_map = {str(k): int(v) for k, v in doc["human_map"].items()}
    return RobotHandModel(str(doc["name"]), links, doc["fingers"], human_map)


def serialize_robot_description(model):
    """Inverse of parse_robot_description (round-trips exactly)."""
    links = []
    for l in model.links:
        joint = {
            "joint_type": l.joint_type,
            "axis": l.axis.tolist(),
            "origin_xyz": l.origin_xyz.tolist(),
            "origin_rpy": l.origin_rpy.tolist(),
        }
        if l.joint_type == "revolute":
            joint["limit_lower"] = l.limit_lower
            joint["limit_upper"] = l.limit_upper
        links.append(
            {
                "name": l.name,
                "parent": l.parent,
                "joint": joint,
                "mass": l.mass,
                "com": l.com.tolist(),
                "sample_points": l.sample_points.tolist(),
            }
        )
    doc = {
        "name": model.name,
        "links": links,
        "fingers": [list(f) for f in model.fingers],
        "human_map": dict(model.human_map),
    }
    return json.dumps(doc, indent=2)
