"""Shared fixtures: small articulated hands, meshes, and grasp synthesis."""

import json

import numpy as np
import pytest

from fungrasp.geometry import parse_obj
from fungrasp.grasps import HumanGrasp
from fungrasp.hand_model import forward_kinematics, parse_robot_description
from fungrasp.transforms import Pose6D


def hand_description(n_fingers=3, joints_per_finger=3):
    """JSON text for a test hand: wrist root, per-finger revolute chain plus a
    fixed tip link carrying a contact sample at its origin.

    The thumb is offset and tilted so the fingertips are never collinear
    (wrist alignment from tips alone needs non-degenerate geometry). The
    human map assigns the distal frames of each finger to consecutive
    MANO rows, tips landing on rows 4/8/12/16/20.
    """
    links = [
        {"name": "wrist", "parent": None,
         "joint": {"joint_type": "fixed", "axis": [0, 0, 1], "origin_xyz": [0, 0, 0],
                   "origin_rpy": [0, 0, 0]},
         "mass": 0.2, "com": [0, 0, 0], "sample_points": []},
    ]
    fingers = []
    human_map = {"wrist": 0}
    layout = [
        ("f0", 1, [0.005, 0.035, 0.012], 0.025, [0.3, 0, -0.4]),   # thumb
        ("f1", 5, [0.0, 0.0, 0.0], 0.03, [0, 0, 0]),               # index
        ("f2", 9, [0.0, -0.025, 0.0], 0.03, [0, 0, 0]),            # middle
        ("f3", 13, [0.0, -0.05, 0.0], 0.028, [0, 0, 0]),           # ring
        ("f4", 17, [0.0, -0.075, 0.0], 0.024, [0, 0, 0]),          # pinky
    ]
    for fn, base, origin, step, rpy in layout[:n_fingers]:
        prev = "wrist"
        chain = []
        for li in range(joints_per_finger):
            name = f"{fn}_l{li}"
            links.append({
                "name": name, "parent": prev,
                "joint": {"joint_type": "revolute", "axis": [0, 1, 0],
                          "origin_xyz": origin if li == 0 else [step, 0, 0],
                          "origin_rpy": rpy if li == 0 else [0, 0, 0],
                          "limit_lower": -0.4, "limit_upper": 1.6},
                "mass": 0.05, "com": [step / 2, 0, 0],
                "sample_points": [[step / 2, 0, -0.005]],
            })
            chain.append(name)
            prev = name
        tip = f"{fn}_tip"
        links.append({
            "name": tip, "parent": prev,
            "joint": {"joint_type": "fixed", "axis": [0, 0, 1],
                      "origin_xyz": [step, 0, 0], "origin_rpy": [0, 0, 0]},
            "mass": 0.01, "com": [0, 0, 0],
            "sample_points": [[0.0, 0, 0]],
        })
        chain.append(tip)
        fingers.append(chain)
        # map the distal joints_per_finger+1 frames onto 4 MANO rows: the
        # last three joint links plus the tip; shorter fingers map fewer
        frames = chain[-4:]
        rows = list(range(base + 4 - len(frames), base + 4))
        for frame, row in zip(frames, rows):
            human_map[frame] = row
    return json.dumps({"name": f"hand{n_fingers}x{joints_per_finger}", "links": links,
                       "fingers": fingers, "human_map": human_map})


@pytest.fixture(scope="session")
def hand9_json():
    return hand_description(3, 3)


@pytest.fixture(scope="session")
def hand9(hand9_json):
    return parse_robot_description(hand9_json)


@pytest.fixture(scope="session")
def hand16_json():
    return hand_description(4, 4)


@pytest.fixture(scope="session")
def hand16(hand16_json):
    return parse_robot_description(hand16_json)


def chain_description(n_joints=4, mass=0.1, step=0.05, limit=1.2):
    """Serial chain swinging about +y; every joint sees a gravity load."""
    links = [
        {"name": "base", "parent": None,
         "joint": {"joint_type": "fixed", "axis": [0, 0, 1], "origin_xyz": [0, 0, 0],
                   "origin_rpy": [0, 0, 0]},
         "mass": 0.0, "com": [0, 0, 0], "sample_points": []},
    ]
    prev = "base"
    for i in range(n_joints):
        links.append({
            "name": f"l{i}", "parent": prev,
            "joint": {"joint_type": "revolute", "axis": [0, 1, 0],
                      "origin_xyz": [step, 0, 0], "origin_rpy": [0, 0, 0],
                      "limit_lower": -limit, "limit_upper": limit},
            "mass": mass, "com": [step / 2, 0, 0], "sample_points": [],
        })
        prev = f"l{i}"
    return json.dumps({"name": f"chain{n_joints}", "links": links,
                       "fingers": [], "human_map": {}})


@pytest.fixture(scope="session")
def chain4():
    return parse_robot_description(chain_description(4))


def pendulum_description():
    # axis -y and com at +10 cm: holding horizontal takes +0.981 N m
    return json.dumps({
        "name": "pendulum",
        "links": [
            {"name": "base", "parent": None,
             "joint": {"joint_type": "fixed", "axis": [0, 0, 1],
                       "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0]},
             "mass": 0.0, "com": [0, 0, 0], "sample_points": []},
            {"name": "rod", "parent": "base",
             "joint": {"joint_type": "revolute", "axis": [0, -1, 0],
                       "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0],
                       "limit_lower": -3.14, "limit_upper": 3.14},
             "mass": 1.0, "com": [0.1, 0, 0], "sample_points": []},
        ],
        "fingers": [], "human_map": {},
    })


@pytest.fixture(scope="session")
def pendulum():
    return parse_robot_description(pendulum_description())


def cube_obj(half=0.5, center=(0.0, 0.0, 0.0)):
    cx, cy, cz = center
    v = []
    for dx in (-half, half):
        for dy in (-half, half):
            for dz in (-half, half):
                v.append((cx + dx, cy + dy, cz + dz))
    faces = [(1, 2, 4, 3), (5, 7, 8, 6), (1, 5, 6, 2), (3, 4, 8, 7), (1, 3, 7, 5), (2, 6, 8, 4)]
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in v]
    lines += ["f %d %d %d %d" % f for f in faces]
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def unit_cube():
    return parse_obj(cube_obj(0.5), mesh_id="unit_cube")


@pytest.fixture(scope="session")
def cube5():
    # the 5 cm object used throughout the retargeting tests
    return parse_obj(cube_obj(0.025), mesh_id="cube5")


def icosphere_obj(level=2, radius=0.1):
    """Subdivided icosahedron, watertight by construction."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) for v in verts]
    for _ in range(level):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                cache[key] = len(verts)
                verts.append(0.5 * (verts[i] + verts[j]))
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    verts = np.array([radius * v / np.linalg.norm(v) for v in verts])
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in verts]
    lines += ["f %d %d %d" % (a + 1, b + 1, c + 1) for a, b, c in faces]
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def icosphere():
    return parse_obj(icosphere_obj(2, 0.1), mesh_id="icosphere")


@pytest.fixture(scope="session")
def synth_human():
    """Build a HumanGrasp whose mapped rows coincide with a robot pose.

    Rows without a mapped robot frame are parked far away; they never
    enter any loss. Contacts default to the mapped fingertip rows.
    """

    def make(model, wrist, q, contact_rows=None, mesh_id="none"):
        poses = forward_kinematics(model, wrist, q)
        jp = np.zeros((21, 3))
        used = set(model.human_map.values())
        for k in range(21):
            if k not in used:
                jp[k] = [10.0 + k, 10.0, 10.0]
        for name, row in model.human_map.items():
            jp[row] = poses[name].position
        contacts = np.zeros(21, dtype=bool)
        if contact_rows is None:
            contact_rows = [r for r in (4, 8, 12, 16, 20) if r in used]
        contacts[list(contact_rows)] = True
        return HumanGrasp(jp, contacts, wrist, mesh_id)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(0)
