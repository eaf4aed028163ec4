"""Grasp records for human demonstrations and retargeted robot hands."""

import json
from dataclasses import dataclass

import numpy as np

from .hand_model import MANO_JOINT_NAMES
from .transforms import Pose6D

N_HUMAN_JOINTS = 21


@dataclass(frozen=True)
class HumanGrasp:
    """One captured human grasp: 21 keypoints in MANO order plus per-joint
    contact flags, all expressed in the object frame."""

    joint_positions: np.ndarray  # (21, 3) meters
    contacts: np.ndarray         # (21,) bool
    wrist_pose: Pose6D
    object_mesh_id: str

    def __post_init__(self):
        jp = np.array(self.joint_positions, dtype=float)
        if jp.shape != (N_HUMAN_JOINTS, 3):
            raise ValueError(f"joint_positions must be (21, 3), got {jp.shape}")
        if not np.all(np.isfinite(jp)):
            raise ValueError("joint_positions contain non-finite values")
        c = np.array(self.contacts, dtype=bool)
        if c.shape != (N_HUMAN_JOINTS,):
            raise ValueError(f"contacts must be (21,), got {c.shape}")
        jp.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "joint_positions", jp)
        object.__setattr__(self, "contacts", c)

    @property
    def contact_indices(self):
        return np.nonzero(self.contacts)[0]

    def joint(self, name):
        return self.joint_positions[MANO_JOINT_NAMES.index(name)]


@dataclass(frozen=True)
class RobotGrasp:
    """Retargeted robot grasp: wrist pose + joint angles in the object
    frame, with per-link contact flags."""

    wrist_pose: Pose6D
    joint_angles: np.ndarray  # (M,)
    link_contacts: dict       # link name -> bool
    object_mesh_id: str = ""

    def __post_init__(self):
        q = np.array(self.joint_angles, dtype=float).reshape(-1)
        if not np.all(np.isfinite(q)):
            raise ValueError("joint_angles contain non-finite values")
        q.flags.writeable = False
        object.__setattr__(self, "joint_angles", q)
        object.__setattr__(
            self, "link_contacts", {str(k): bool(v) for k, v in self.link_contacts.items()}
        )

    @property
    def contact_links(self):
        return tuple(n for n, on in self.link_contacts.items() if on)


def _pose_to_obj(pose):
    return {"position": pose.position.tolist(), "rotation": pose.rotation.tolist()}


def _pose_from_obj(obj):
    return Pose6D(np.array(obj["position"], dtype=float), np.array(obj["rotation"], dtype=float))


def human_grasp_to_json(grasp):
    return json.dumps(
        {
            "joint_positions": grasp.joint_positions.tolist(),
            "contacts": [int(c) for c in grasp.contacts],
            "wrist_pose": _pose_to_obj(grasp.wrist_pose),
            "object_mesh_id": grasp.object_mesh_id,
        },
        indent=2,
    )


def human_grasp_from_json(text):
    obj = json.loads(text)
    return HumanGrasp(
        joint_positions=np.array(obj["joint_positions"], dtype=float),
        contacts=np.array(obj["contacts"], dtype=bool),
        wrist_pose=_pose_from_obj(obj["wrist_pose"]),
        object_mesh_id=str(obj["object_mesh_id"]),
    )


def robot_grasp_to_json(grasp):
    return json.dumps(
        {
            "wrist_pose": _pose_to_obj(grasp.wrist_pose),
            "joint_angles": grasp.joint_angles.tolist(),
            "link_contacts": dict(grasp.link_contacts),
            "object_mesh_id": grasp.object_mesh_id,
        },
        indent=2,
    )


def robot_grasp_from_json(text):
    obj = json.loads(text)
    return RobotGrasp(
        wrist_pose=_pose_from_obj(obj["wrist_pose"]),
        joint_angles=np.array(obj["joint_angles"], dtype=float),
        link_contacts=obj["link_contacts"],
        object_mesh_id=str(obj.get("object_mesh_id", "")),
    )
