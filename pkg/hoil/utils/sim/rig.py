"""
Procedural capsule-limb human.

A 24-joint kinematic tree in the SMPL joint order, posed with local
axis-angle rotations, skinned rigidly with one capsule per body part. Face
labels follow the 24 body-part classes and every part keeps the list of
its vertex indices for keypoint-contact lookup.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import trimesh
from scipy.spatial.transform import Rotation

from hoil.utils.core.errors import ContractError
from hoil.utils.sim.mesh import TriangleMesh

JOINT_NAMES = (
    "pelvis", "L_hip", "R_hip", "spine1", "L_knee", "R_knee", "spine2", "L_ankle", "R_ankle", "spine3",
    "L_foot", "R_foot", "neck", "L_collar", "R_collar", "head", "L_shoulder", "R_shoulder",
    "L_elbow", "R_elbow", "L_wrist", "R_wrist", "L_hand", "R_hand",
)
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

# Rest positions in the body frame: x to the subject's left, y forward, z up, pelvis at the origin.
REST_JOINTS = np.array([
    [0.00, 0.00, 0.00], [0.09, 0.00, -0.08], [-0.09, 0.00, -0.08], [0.00, 0.00, 0.10],
    [0.09, 0.00, -0.50], [-0.09, 0.00, -0.50], [0.00, 0.00, 0.22], [0.09, 0.00, -0.90],
    [-0.09, 0.00, -0.90], [0.00, 0.00, 0.35], [0.09, 0.10, -0.96], [-0.09, 0.10, -0.96],
    [0.00, 0.00, 0.55], [0.07, 0.00, 0.50], [-0.07, 0.00, 0.50], [0.00, 0.00, 0.70],
    [0.18, 0.00, 0.50], [-0.18, 0.00, 0.50], [0.45, 0.00, 0.50], [-0.45, 0.00, 0.50],
    [0.70, 0.00, 0.50], [-0.70, 0.00, 0.50], [0.78, 0.00, 0.50], [-0.78, 0.00, 0.50],
])

# Landmarks ride on a joint: (parent joint, rest position).
LANDMARKS = {
    "head_top": (15, np.array([0.00, 0.00, 0.84])),
    "nose": (15, np.array([0.00, 0.11, 0.72])),
    "L_toe": (10, np.array([0.09, 0.18, -0.96])),
    "R_toe": (11, np.array([-0.09, 0.18, -0.96])),
    "L_fingertip": (22, np.array([0.86, 0.00, 0.50])),
    "R_fingertip": (23, np.array([-0.86, 0.00, 0.50])),
}

# part class -> (start, end, radius); endpoints name joints or landmarks.
CAPSULES = (
    ("L_hip", "R_hip", 0.10), ("L_hip", "L_knee", 0.07), ("R_hip", "R_knee", 0.07), ("pelvis", "spine1", 0.12),
    ("L_knee", "L_ankle", 0.05), ("R_knee", "R_ankle", 0.05), ("spine1", "spine2", 0.13),
    ("L_ankle", "L_foot", 0.045), ("R_ankle", "R_foot", 0.045), ("spine2", "neck", 0.14),
    ("L_foot", "L_toe", 0.04), ("R_foot", "R_toe", 0.04), ("neck", "head", 0.05),
    ("L_collar", "L_shoulder", 0.05), ("R_collar", "R_shoulder", 0.05), ("head", "head_top", 0.10),
    ("L_shoulder", "L_elbow", 0.045), ("R_shoulder", "R_elbow", 0.045), ("L_elbow", "L_wrist", 0.04),
    ("R_elbow", "R_wrist", 0.04), ("L_wrist", "L_hand", 0.035), ("R_wrist", "R_hand", 0.035),
    ("L_hand", "L_fingertip", 0.025), ("R_hand", "R_fingertip", 0.025),
)

JOINT_LIMIT = 0.9 * np.pi
FOOT_CLEARANCE = 0.96 + 0.045


@dataclass(frozen=True)
class PoseParams:
    """Local axis-angle rotation per joint plus a root placement (yaw about +z)."""

    rotations: np.ndarray = field(default_factory=lambda: np.zeros((24, 3)))
    root_position: Tuple[float, float, float] = (0.0, 8.0, -1.8 + FOOT_CLEARANCE)
    root_yaw: float = np.pi

    def __post_init__(self):
        rotations = np.asarray(self.rotations, dtype=np.float64)
        if rotations.shape != (24, 3):
            raise ContractError("pose-shape", f"expected 24 x 3 rotations, got {rotations.shape}")
        if not np.all(np.isfinite(rotations)):
            raise ContractError("pose-finite", "pose rotations must be finite")
        angles = np.linalg.norm(rotations, axis=1)
        if np.any(angles > JOINT_LIMIT):
            bad = int(np.argmax(angles))
            raise ContractError("joint-limit", f"joint {JOINT_NAMES[bad]} rotates {angles[bad]:.2f} rad")
        object.__setattr__(self, "rotations", rotations)

    def with_rotation(self, joint: str, rotvec) -> "PoseParams":
        rotations = self.rotations.copy()
        rotations[JOINT_NAMES.index(joint)] = rotvec
        return PoseParams(rotations, self.root_position, self.root_yaw)

    def placed(self, position, yaw: Optional[float] = None) -> "PoseParams":
        return PoseParams(self.rotations, tuple(position), self.root_yaw if yaw is None else yaw)


def t_pose(**placement) -> PoseParams:
    pose = PoseParams()
    return pose.placed(**placement) if placement else pose


def gait_pose(phase: float, stride: float = 0.45, arm_swing: float = 0.35, **placement) -> PoseParams:
    """A walking-in-place cycle; phase in [0, 1)."""
    swing = np.sin(2 * np.pi * phase)
    rotations = np.zeros((24, 3))
    rotations[1] = [-stride * swing, 0, 0]
    rotations[2] = [stride * swing, 0, 0]
    rotations[4] = [-stride * max(0.0, swing), 0, 0]
    rotations[5] = [-stride * max(0.0, -swing), 0, 0]
    # Arms hang down from T-pose, then swing opposite to the legs.
    rotations[16] = [arm_swing * swing, 1.3, 0]
    rotations[17] = [-arm_swing * swing, -1.3, 0]
    pose = PoseParams(rotations)
    return pose.placed(**placement) if placement else pose


def random_pose(rng: np.random.Generator, scale: float = 0.35, **placement) -> PoseParams:
    """Perturbs limb joints of a relaxed stance; spine and feet stay near rest."""
    rotations = np.zeros((24, 3))
    limb_joints = [1, 2, 4, 5, 13, 14, 16, 17, 18, 19]
    rotations[limb_joints] = rng.normal(0.0, scale, size=(len(limb_joints), 3))
    rotations[16] += [0, 0.8, 0]
    rotations[17] += [0, -0.8, 0]
    pose = PoseParams(rotations)
    return pose.placed(**placement) if placement else pose


@dataclass
class RigState:
    joints: np.ndarray
    landmarks: Dict[str, np.ndarray]

    def position(self, name: str) -> np.ndarray:
        if name in self.landmarks:
            return self.landmarks[name]
        return self.joints[JOINT_NAMES.index(name)]


def forward_kinematics(pose: PoseParams) -> RigState:
    local = Rotation.from_rotvec(pose.rotations)
    root = Rotation.from_rotvec([0.0, 0.0, pose.root_yaw])
    global_rot: List[Rotation] = [None] * 24
    positions = np.zeros((24, 3))
    for j, parent in enumerate(PARENTS):
        if parent < 0:
            global_rot[j] = root * local[j]
            positions[j] = np.asarray(pose.root_position, dtype=np.float64)
        else:
            global_rot[j] = global_rot[parent] * local[j]
            positions[j] = positions[parent] + global_rot[parent].apply(REST_JOINTS[j] - REST_JOINTS[parent])
    landmarks = {
        name: positions[joint] + global_rot[joint].apply(rest - REST_JOINTS[joint])
        for name, (joint, rest) in LANDMARKS.items()
    }
    return RigState(positions, landmarks)


def _capsule(start: np.ndarray, end: np.ndarray, radius: float, count=(8, 8)) -> trimesh.Trimesh:
    axis = end - start
    length = float(np.linalg.norm(axis))
    capsule = trimesh.creation.capsule(height=max(length, 1e-6), radius=radius, count=list(count))
    capsule.apply_translation(-capsule.bounds.mean(axis=0))
    if length > 0:
        capsule.apply_transform(trimesh.geometry.align_vectors([0.0, 0.0, 1.0], axis / length))
    capsule.apply_translation(0.5 * (start + end))
    return capsule


@dataclass
class HumanMesh:
    mesh: TriangleMesh
    part_vertex_map: Dict[int, np.ndarray]
    rig: RigState


def build_human(pose: PoseParams, count=(8, 8)) -> HumanMesh:
    rig = forward_kinematics(pose)
    vertices, faces, face_part = [], [], []
    part_vertex_map: Dict[int, np.ndarray] = {}
    offset = 0
    for part, (start, end, radius) in enumerate(CAPSULES):
        capsule = _capsule(rig.position(start), rig.position(end), radius, count)
        keep = trimesh.triangles.area(capsule.triangles) > 1e-12
        vertices.append(np.asarray(capsule.vertices))
        faces.append(np.asarray(capsule.faces)[keep] + offset)
        face_part.append(np.full(int(keep.sum()), part, dtype=np.int64))
        part_vertex_map[part] = np.arange(offset, offset + len(capsule.vertices), dtype=np.int64)
        offset += len(capsule.vertices)
    mesh = TriangleMesh(np.concatenate(vertices), np.concatenate(faces), np.concatenate(face_part))
    return HumanMesh(mesh, part_vertex_map, rig)
