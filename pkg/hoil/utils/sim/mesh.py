"""
Labeled triangle meshes, planes and scenes, with OBJ + sidecar I/O.

On disk a mesh is an ASCII OBJ, a face-label file with one class index per
line (face order), and for human meshes a JSON map part -> vertex indices.
"""
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import trimesh

from hoil.utils.core.errors import ContractError, DataError, ShapeError
from hoil.utils.core.pointcloud import NUM_CLASSES, OBJECT_CLASS


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_part: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64)
        faces = np.asarray(self.faces, dtype=np.int64)
        face_part = np.asarray(self.face_part, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ShapeError("TriangleMesh.vertices", vertices.shape, detail="expected V x 3")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ShapeError("TriangleMesh.faces", faces.shape, detail="expected F x 3")
        if face_part.shape != (faces.shape[0],):
            raise ShapeError("TriangleMesh.face_part", face_part.shape, (faces.shape[0],))
        if faces.size and (faces.min() < 0 or faces.max() >= vertices.shape[0]):
            raise ContractError("face-index", "face references a vertex outside the mesh")
        if np.any((face_part < 0) | (face_part >= NUM_CLASSES - 1)):
            raise ContractError("face-part", "face labels must be body parts or the object class")
        areas = trimesh.triangles.area(vertices[faces]) if faces.size else np.zeros(0)
        if np.any(areas <= 0):
            raise ContractError("degenerate-face", f"{int((areas <= 0).sum())} zero-area faces")
        for name, value in (("vertices", vertices), ("faces", faces), ("face_part", face_part)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def bounds(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces, process=False)

    def face_flags_from_vertices(self, vertex_flags: np.ndarray) -> np.ndarray:
        return np.asarray(vertex_flags, dtype=bool)[self.faces].any(axis=1)


@dataclass(frozen=True)
class Plane:
    point: Tuple[float, float, float]
    normal: Tuple[float, float, float]

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise ContractError("plane-normal", "plane normals must be unit length")


@dataclass(frozen=True)
class Scene:
    human: TriangleMesh
    object: Optional[TriangleMesh] = None
    planes: Tuple[Plane, ...] = ()
    part_vertex_map: Dict[int, np.ndarray] = field(default_factory=dict)

    def without_object(self) -> "Scene":
        return Scene(self.human, None, self.planes, self.part_vertex_map)


def make_box(center, extents, subdivisions: int = 2) -> TriangleMesh:
    box = trimesh.creation.box(extents=extents)
    for _ in range(subdivisions):
        box = box.subdivide()
    box.apply_translation(np.asarray(center, dtype=np.float64))
    return TriangleMesh(box.vertices, box.faces, np.full(len(box.faces), OBJECT_CLASS))


def save_mesh(mesh: TriangleMesh, obj_path: str, part_vertex_map: Optional[Dict[int, np.ndarray]] = None):
    os.makedirs(os.path.dirname(os.path.abspath(obj_path)), exist_ok=True)
    mesh.to_trimesh().export(obj_path, file_type="obj")
    with open(_labels_path(obj_path), "w", encoding="utf-8") as f:
        f.write("\n".join(str(int(p)) for p in mesh.face_part) + "\n")
    if part_vertex_map is not None:
        with open(_vertex_map_path(obj_path), "w", encoding="utf-8") as f:
            json.dump({str(k): [int(i) for i in v] for k, v in sorted(part_vertex_map.items())}, f, indent=2)
            f.write("\n")


def load_mesh(obj_path: str) -> Tuple[TriangleMesh, Dict[int, np.ndarray]]:
    if not os.path.exists(obj_path):
        raise DataError(f"mesh not found: {obj_path}")
    loaded = trimesh.load(obj_path, file_type="obj", process=False, force="mesh")
    labels_path = _labels_path(obj_path)
    if not os.path.exists(labels_path):
        raise DataError(f"face-label sidecar missing: {labels_path}")
    with open(labels_path, "r", encoding="utf-8") as f:
        face_part = np.array([int(line) for line in f if line.strip()], dtype=np.int64)
    if face_part.shape[0] != len(loaded.faces):
        raise DataError(f"{labels_path} has {face_part.shape[0]} labels for {len(loaded.faces)} faces")
    part_vertex_map: Dict[int, np.ndarray] = {}
    map_path = _vertex_map_path(obj_path)
    if os.path.exists(map_path):
        with open(map_path, "r", encoding="utf-8") as f:
            part_vertex_map = {int(k): np.asarray(v, dtype=np.int64) for k, v in json.load(f).items()}
    return TriangleMesh(loaded.vertices, loaded.faces, face_part), part_vertex_map


def _labels_path(obj_path: str) -> str:
    return os.path.splitext(obj_path)[0] + ".labels"


def _vertex_map_path(obj_path: str) -> str:
    return os.path.splitext(obj_path)[0] + ".parts.json"
