"""
Human-object contact labels.

A vertex is in contact when its exact distance to the other mesh's surface
is strictly below the threshold. Both directions are labeled. Faces take the
OR of their vertices, points take the flag of the face they were cast from,
and keypoints take the OR over the vertices of their associated parts.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import trimesh

from hoil.utils.core.errors import ContractError
from hoil.utils.core.logging import debug, warn
from hoil.utils.core.pointcloud import BACKGROUND_CLASS, OBJECT_CLASS, LabeledPointCloud, KeypointProfile
from hoil.utils.sim.mesh import Scene, TriangleMesh

PAIR_CHUNK = 250_000


@dataclass(frozen=True)
class ContactConfig:
    threshold: float = 0.05

    def __post_init__(self):
        if not self.threshold > 0:
            raise ContractError("contact-threshold", "threshold must be positive")


@dataclass(frozen=True)
class ContactLabels:
    human_vertex: np.ndarray
    object_vertex: np.ndarray
    human_face: np.ndarray
    object_face: np.ndarray

    def face_flags(self) -> np.ndarray:
        """Face flags in scene order: human faces first, then object faces."""
        return np.concatenate([self.human_face, self.object_face])


def surface_distance(points: np.ndarray, mesh: TriangleMesh, cutoff: float = np.inf) -> np.ndarray:
    """Exact point-to-surface distance; points provably farther than `cutoff` get inf."""
    points = np.asarray(points, dtype=np.float64)
    distances = np.full(points.shape[0], np.inf)
    box = mesh.bounds()
    candidates = np.flatnonzero(np.all((points >= box[0] - cutoff) & (points <= box[1] + cutoff), axis=1))
    if candidates.size == 0:
        return distances
    triangles = mesh.triangles()
    if np.isfinite(cutoff):
        lo = points[candidates].min(axis=0) - cutoff
        hi = points[candidates].max(axis=0) + cutoff
        near = np.all((triangles.max(axis=1) >= lo) & (triangles.min(axis=1) <= hi), axis=1)
        triangles = triangles[near]
    if triangles.shape[0] == 0:
        return distances
    per_chunk = max(1, PAIR_CHUNK // triangles.shape[0])
    for start in range(0, candidates.size, per_chunk):
        chunk = candidates[start:start + per_chunk]
        pts = np.repeat(points[chunk], triangles.shape[0], axis=0)
        tris = np.tile(triangles, (chunk.size, 1, 1))
        closest = trimesh.triangles.closest_point(tris, pts)
        d = np.linalg.norm(closest - pts, axis=1).reshape(chunk.size, triangles.shape[0])
        distances[chunk] = d.min(axis=1)
    return distances


def contact_labels(human: TriangleMesh, obj: TriangleMesh, cfg: ContactConfig = ContactConfig()) -> ContactLabels:
    if human is None or obj is None:
        raise ContractError("contact-meshes", "contact labeling needs both a human and an object mesh")
    human_vertex = surface_distance(human.vertices, obj, cfg.threshold) < cfg.threshold
    object_vertex = surface_distance(obj.vertices, human, cfg.threshold) < cfg.threshold
    debug(f"contact: {int(human_vertex.sum())} human / {int(object_vertex.sum())} object vertices")
    return ContactLabels(human_vertex, object_vertex,
                         human.face_flags_from_vertices(human_vertex), obj.face_flags_from_vertices(object_vertex))


def scene_contact(scene: Scene, cfg: ContactConfig = ContactConfig()) -> ContactLabels:
    """Contact labels for a scene; with no object everything is non-contact."""
    if scene.object is None:
        human = scene.human
        return ContactLabels(np.zeros(human.vertices.shape[0], dtype=bool), np.zeros(0, dtype=bool),
                             np.zeros(human.num_faces, dtype=bool), np.zeros(0, dtype=bool))
    return contact_labels(scene.human, scene.object, cfg)


def propagate_contact(points: LabeledPointCloud, face_flags: np.ndarray) -> LabeledPointCloud:
    face_flags = np.asarray(face_flags, dtype=bool)
    on_mesh = points.part != BACKGROUND_CLASS
    if not np.any(on_mesh):
        return points.with_contact(np.zeros(len(points), dtype=bool))
    if points.face_id is None:
        raise ContractError("face-provenance", "mesh points carry no face ids")
    face_id = points.face_id[on_mesh]
    missing = (face_id < 0) | (face_id >= face_flags.shape[0])
    if np.any(missing):
        bad = int(np.flatnonzero(on_mesh)[np.argmax(missing)])
        raise ContractError("face-provenance", f"point {bad} has no valid source face")
    contact = np.zeros(len(points), dtype=bool)
    contact[on_mesh] = face_flags[face_id]
    return points.with_contact(contact)


def keypoint_contact(human_vertex: np.ndarray, object_vertex: Optional[np.ndarray],
                     part_vertex_map: Dict[int, np.ndarray], profile: KeypointProfile) -> np.ndarray:
    flags = np.zeros(profile.num_keypoints, dtype=bool)
    for k, parts in enumerate(profile.parts):
        if OBJECT_CLASS in parts:
            flags[k] = object_vertex is not None and bool(np.any(object_vertex))
            continue
        vertex_sets = [np.asarray(part_vertex_map.get(p, ()), dtype=np.int64) for p in parts]
        vertices = np.concatenate(vertex_sets) if vertex_sets else np.zeros(0, dtype=np.int64)
        if vertices.size == 0:
            warn(f"keypoint {profile.names[k]} has no associated vertices; contact set to false")
            continue
        flags[k] = bool(np.any(human_vertex[vertices]))
    return flags


def zero_velocity_contact(trajectory: np.ndarray, dt: float, threshold: float = 0.15, window: int = 3) -> np.ndarray:
    """Per-frame, per-keypoint contact where the windowed mean speed stays below `threshold` (m/s).

    Speed at frame t is the backward difference (forward at t = 0); the window
    is centred on t and clipped to the sequence.
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim != 3 or trajectory.shape[2] != 3:
        raise ContractError("trajectory-shape", f"expected T x N_k x 3, got {trajectory.shape}")
    num_frames = trajectory.shape[0]
    if num_frames < 2:
        raise ContractError("sequence-length", "zero-velocity contact needs at least 2 frames")
    if window < 1 or window > num_frames:
        raise ContractError("window", f"window {window} must lie in [1, {num_frames}]")
    if not dt > 0:
        raise ContractError("sequence-dt", "dt must be positive")
    step = np.linalg.norm(np.diff(trajectory, axis=0), axis=2) / dt
    speed = np.concatenate([step[:1], step], axis=0)
    before = (window - 1) // 2
    after = window - 1 - before
    cumulative = np.concatenate([np.zeros((1, speed.shape[1])), np.cumsum(speed, axis=0)])
    lo = np.clip(np.arange(num_frames) - before, 0, num_frames)
    hi = np.clip(np.arange(num_frames) + after + 1, 0, num_frames)
    mean_speed = (cumulative[hi] - cumulative[lo]) / (hi - lo)[:, None]
    return mean_speed < threshold
