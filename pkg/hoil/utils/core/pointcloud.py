"""
Domain types shared across the pipeline: point clouds, the 26-class part label
space, keypoint sets, skeletons, grid configuration and frame sequences.

Every value object copies its arrays on construction and marks them read-only,
so instances can be shared between worker threads.
"""
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from hoil.config import config
from hoil.utils.core.config_loader import load_json_file
from hoil.utils.core.errors import ContractError, ShapeError
from hoil.utils.core.logging import warn

NUM_BODY_PARTS = 24
OBJECT_CLASS = 24
BACKGROUND_CLASS = 25
NUM_CLASSES = 26
NO_FACE = -1

PARTS_FILE = os.path.join("parts", "parts.json")
PROFILES_FILE = os.path.join("keypoints", "profiles.json")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PartLabelSpace:
    num_body_parts: int = NUM_BODY_PARTS
    object_class: int = OBJECT_CLASS
    background_class: int = BACKGROUND_CLASS

    @property
    def num_classes(self) -> int:
        return self.num_body_parts + 2

    def is_human(self, part: np.ndarray) -> np.ndarray:
        return np.asarray(part) < self.num_body_parts


PART_SPACE = PartLabelSpace()


@dataclass(frozen=True)
class PartCatalog:
    names: Tuple[str, ...]
    frequently_interacting: Tuple[int, ...]
    coarse_map: Tuple[int, ...]
    middle_map: Tuple[int, ...]
    part_weights: Tuple[float, ...]


@lru_cache(maxsize=1)
def load_part_catalog() -> PartCatalog:
    data = load_json_file(os.path.join(config.ETC_DIR, PARTS_FILE), required=True)
    names = tuple(data["names"])
    if len(names) != NUM_CLASSES:
        raise ContractError("part-catalog", f"expected {NUM_CLASSES} part names, got {len(names)}")
    fir = tuple(int(i) for i in data["frequently_interacting"])
    weights_cfg = data["part_weights"]
    weights = []
    for class_idx in range(NUM_CLASSES):
        if class_idx == BACKGROUND_CLASS:
            weights.append(float(weights_cfg["background"]))
        elif class_idx == OBJECT_CLASS:
            weights.append(float(weights_cfg["object"]))
        elif class_idx in fir:
            weights.append(float(weights_cfg["frequently_interacting"]))
        else:
            weights.append(float(weights_cfg["body"]))
    hierarchy = data["hierarchy"]
    return PartCatalog(
        names=names,
        frequently_interacting=fir,
        coarse_map=tuple(int(i) for i in hierarchy["coarse"]["map"]),
        middle_map=tuple(int(i) for i in hierarchy["middle"]["map"]),
        part_weights=tuple(weights),
    )


def default_part_weights() -> np.ndarray:
    return np.array(load_part_catalog().part_weights, dtype=np.float64)


@dataclass(frozen=True)
class PointCloud:
    coords: np.ndarray
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ShapeError("PointCloud", coords.shape, detail="expected N x 3")
        if coords.shape[0] < 1:
            raise ContractError("non-empty", "point cloud must hold at least one point")
        if not np.all(np.isfinite(coords)):
            bad = int(np.argwhere(~np.all(np.isfinite(coords), axis=1))[0, 0])
            raise ContractError("coords-finite", f"non-finite coordinate at point {bad}")
        object.__setattr__(self, "coords", _frozen(coords))
        if self.intensity is not None:
            intensity = np.asarray(self.intensity, dtype=np.float64)
            if intensity.shape != (coords.shape[0],):
                raise ShapeError("PointCloud.intensity", intensity.shape, coords.shape)
            object.__setattr__(self, "intensity", _frozen(intensity))

    def __len__(self) -> int:
        return self.coords.shape[0]

    def subset(self, indices: np.ndarray) -> "PointCloud":
        intensity = None if self.intensity is None else self.intensity[indices]
        return PointCloud(self.coords[indices], intensity)


@dataclass(frozen=True)
class LabeledPointCloud:
    cloud: PointCloud
    part: np.ndarray
    contact: np.ndarray
    face_id: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.cloud)
        part = np.asarray(self.part, dtype=np.int64)
        contact = np.asarray(self.contact, dtype=bool)
        if part.shape != (n,) or contact.shape != (n,):
            raise ShapeError("LabeledPointCloud", (n,), part.shape, contact.shape)
        object.__setattr__(self, "part", _frozen(part))
        object.__setattr__(self, "contact", _frozen(contact))
        if self.face_id is not None:
            face_id = np.asarray(self.face_id, dtype=np.int64)
            if face_id.shape != (n,):
                raise ShapeError("LabeledPointCloud.face_id", (n,), face_id.shape)
            object.__setattr__(self, "face_id", _frozen(face_id))

    def __len__(self) -> int:
        return len(self.cloud)

    @property
    def coords(self) -> np.ndarray:
        return self.cloud.coords

    def with_contact(self, contact: np.ndarray) -> "LabeledPointCloud":
        return LabeledPointCloud(self.cloud, self.part, contact, self.face_id)

    def subset(self, indices: np.ndarray) -> "LabeledPointCloud":
        indices = np.asarray(indices, dtype=np.int64)
        face_id = None if self.face_id is None else self.face_id[indices]
        return LabeledPointCloud(self.cloud.subset(indices), self.part[indices], self.contact[indices], face_id)


@dataclass(frozen=True)
class KeypointSet:
    coords: np.ndarray
    valid: Optional[np.ndarray] = None
    contact: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ShapeError("KeypointSet", coords.shape, detail="expected N_k x 3")
        n_k = coords.shape[0]
        valid = np.ones(n_k, dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        contact = np.zeros(n_k, dtype=bool) if self.contact is None else np.asarray(self.contact, dtype=bool)
        if valid.shape != (n_k,) or contact.shape != (n_k,):
            raise ShapeError("KeypointSet", (n_k,), valid.shape, contact.shape)
        if not np.all(np.isfinite(coords[valid])):
            raise ContractError("keypoint-finite", "valid keypoints must have finite coordinates")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "contact", _frozen(contact))

    def __len__(self) -> int:
        return self.coords.shape[0]

    def translated(self, offset: Sequence[float]) -> "KeypointSet":
        return KeypointSet(self.coords + np.asarray(offset, dtype=np.float64), self.valid, self.contact)

    def with_coords(self, coords: np.ndarray) -> "KeypointSet":
        return KeypointSet(coords, self.valid, self.contact)


@dataclass(frozen=True)
class Skeleton:
    edges: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if a == b:
                raise ContractError("skeleton-self-edge", f"self edge at keypoint {a}")
            if a < 0 or b < 0:
                raise ContractError("skeleton-index", f"negative index in edge ({a}, {b})")
        object.__setattr__(self, "edges", edges)

    def check(self, num_keypoints: int):
        for a, b in self.edges:
            if a >= num_keypoints or b >= num_keypoints:
                raise ContractError("skeleton-index", f"edge ({a}, {b}) exceeds N_k={num_keypoints}")

    def restricted(self, valid: np.ndarray) -> "Skeleton":
        """Drops every edge that touches an invalid keypoint."""
        valid = np.asarray(valid, dtype=bool)
        self.check(valid.shape[0])
        return Skeleton(tuple((a, b) for a, b in self.edges if valid[a] and valid[b]))

    def as_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class GridConfig:
    base_grid_size: float = 0.01
    stage_multiplier: float = 2.0
    num_stages: int = 1

    def __post_init__(self):
        if not self.base_grid_size > 0:
            raise ContractError("grid-size", "base_grid_size must be positive")
        if not self.stage_multiplier > 1:
            raise ContractError("grid-multiplier", "stage_multiplier must exceed 1")

    def grid_size(self, stage: int) -> float:
        return self.base_grid_size * self.stage_multiplier ** stage


@dataclass(frozen=True)
class FrameSequence:
    frames: Tuple[Tuple[LabeledPointCloud, KeypointSet], ...]
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractError("sequence-dt", "dt must be positive")
        frames = tuple(self.frames)
        if frames:
            n_k = len(frames[0][1])
            for idx, (_, keypoints) in enumerate(frames):
                if len(keypoints) != n_k:
                    raise ContractError("sequence-nk", f"frame {idx} has {len(keypoints)} keypoints, expected {n_k}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def keypoint_trajectory(self) -> np.ndarray:
        return np.stack([kp.coords for _, kp in self.frames])


@dataclass(frozen=True)
class KeypointProfile:
    name: str
    names: Tuple[str, ...]
    rig_names: Tuple[str, ...]
    parts: Tuple[Tuple[int, ...], ...]
    skeleton: Skeleton
    torso: Tuple[int, int, int, int]

    @property
    def num_keypoints(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@lru_cache(maxsize=None)
def load_profile(name: str) -> KeypointProfile:
    profiles = load_json_file(os.path.join(config.ETC_DIR, PROFILES_FILE), required=True)
    if name not in profiles:
        raise ContractError("profile", f"unknown keypoint profile '{name}'; known: {sorted(profiles)}")
    data = profiles[name]
    entries = list(data.get("keypoints", []))
    skeleton_edges = data.get("skeleton")
    torso = data.get("torso")
    if "extends" in data:
        base = profiles[data["extends"]]
        entries = list(base["keypoints"]) + entries + list(data.get("extra", []))
        skeleton_edges = skeleton_edges or base["skeleton"]
        torso = torso or base["torso"]
    profile = KeypointProfile(
        name=name,
        names=tuple(e["name"] for e in entries),
        rig_names=tuple(e["rig"] for e in entries),
        parts=tuple(tuple(int(p) for p in e["parts"]) for e in entries),
        skeleton=Skeleton(tuple(tuple(edge) for edge in skeleton_edges)),
        torso=(int(torso["left_shoulder"]), int(torso["right_shoulder"]),
               int(torso["left_hip"]), int(torso["right_hip"])),
    )
    profile.skeleton.check(profile.num_keypoints)
    return profile


def _default_torso(num_keypoints: int) -> Tuple[int, int, int, int]:
    if num_keypoints in (15, 16):
        return load_profile("SMPL15").torso
    if num_keypoints == 14:
        return load_profile("WAYMO14").torso
    raise ContractError("torso-joints", f"no default torso joints for N_k={num_keypoints}; pass torso indices")


def torso_length(k: KeypointSet, torso: Optional[Tuple[int, int, int, int]] = None) -> float:
    """Distance between the shoulder midpoint and the hip midpoint, in meters.

    `torso` holds (left_shoulder, right_shoulder, left_hip, right_hip) indices;
    when omitted it follows the profile implied by N_k.
    """
    torso = torso or _default_torso(len(k))
    if not all(k.valid[i] for i in torso):
        missing = [i for i in torso if not k.valid[i]]
        raise ContractError("torso-joints", f"shoulder/hip keypoints {missing} are not valid")
    ls, rs, lh, rh = (k.coords[i] for i in torso)
    length = float(np.linalg.norm(0.5 * (ls + rs) - 0.5 * (lh + rh)))
    if length == 0.0:
        warn("degenerate torso: shoulder and hip midpoints coincide")
    return length


@dataclass(frozen=True)
class Violation:
    rule: str
    point: Optional[int] = None
    detail: str = ""


def validate(lc: LabeledPointCloud) -> List[Violation]:
    violations: List[Violation] = []
    coords = lc.cloud.coords
    finite = np.all(np.isfinite(coords), axis=1)
    for idx in np.flatnonzero(~finite):
        violations.append(Violation("coords-finite", int(idx)))
    for idx in np.flatnonzero((lc.part < 0) | (lc.part >= NUM_CLASSES)):
        violations.append(Violation("part-range", int(idx), f"part={int(lc.part[idx])}"))
    for idx in np.flatnonzero((lc.part == BACKGROUND_CLASS) & lc.contact):
        violations.append(Violation("background-contact", int(idx)))
    if lc.face_id is not None:
        mesh_point = (lc.part >= 0) & (lc.part < BACKGROUND_CLASS)
        for idx in np.flatnonzero(mesh_point & (lc.face_id < 0)):
            violations.append(Violation("face-provenance", int(idx), "mesh point without face"))
        for idx in np.flatnonzero((lc.part == BACKGROUND_CLASS) & (lc.face_id >= 0)):
            violations.append(Violation("face-provenance", int(idx), "background point with face"))
    return violations


def check_part_weights(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (NUM_CLASSES,):
        raise ShapeError("part_weights", weights.shape, (NUM_CLASSES,))
    if not np.all(weights > 0):
        raise ContractError("part-weights", "part weights must be positive")
    return weights


def remap_keypoints(k: KeypointSet, source: KeypointProfile, target: KeypointProfile) -> KeypointSet:
    """Reorders keypoints by name into `target`; names missing from `source` become invalid."""
    if len(k) != source.num_keypoints:
        raise ContractError("profile-mismatch", f"{len(k)} keypoints for profile {source.name}")
    coords = np.zeros((target.num_keypoints, 3))
    valid = np.zeros(target.num_keypoints, dtype=bool)
    contact = np.zeros(target.num_keypoints, dtype=bool)
    for j, name in enumerate(target.names):
        if name in source.names:
            i = source.index(name)
            coords[j], valid[j], contact[j] = k.coords[i], k.valid[i], k.contact[i]
    return KeypointSet(coords, valid, contact)
