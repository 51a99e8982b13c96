"""
Synthetic LiDAR scans by ray casting.

Rays leave the sensor origin on a regular azimuth/elevation grid (azimuth 0
looks along +y, positive elevation tilts toward +z). Each ray keeps its
nearest hit among all mesh triangles and planes. Triangle tests are the
vectorized Moller-Trumbore form; rays are culled per body part against the
part's bounding box before any triangle is touched.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from hoil.utils.core.errors import ContractError
from hoil.utils.core.logging import debug
from hoil.utils.core.pointcloud import (
    BACKGROUND_CLASS, NO_FACE, KeypointSet, LabeledPointCloud, PointCloud, load_profile,
)
from hoil.utils.sim.mesh import Plane, Scene, TriangleMesh, make_box
from hoil.utils.sim.rig import PoseParams, RigState, build_human, t_pose

PARALLEL_EPS = 1e-12
MIN_T = 1e-9
RAY_CHUNK = 200_000


@dataclass(frozen=True)
class SensorModel:
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    azimuth_range: Tuple[float, float] = (np.radians(-60.0), np.radians(60.0))
    azimuth_step: float = np.radians(0.2)
    elevation_range: Tuple[float, float] = (np.radians(-25.0), np.radians(5.0))
    elevation_step: float = np.radians(0.33)
    max_range: float = 30.0

    def __post_init__(self):
        if not (self.azimuth_step > 0 and self.elevation_step > 0):
            raise ContractError("sensor-step", "angular steps must be positive")
        if self.azimuth_range[1] < self.azimuth_range[0] or self.elevation_range[1] < self.elevation_range[0]:
            raise ContractError("sensor-range", "angular ranges must be non-empty")
        if not self.max_range > 0:
            raise ContractError("sensor-range", "max_range must be positive")

    def angles(self) -> Tuple[np.ndarray, np.ndarray]:
        az = np.arange(self.azimuth_range[0], self.azimuth_range[1] + 0.5 * self.azimuth_step, self.azimuth_step)
        el = np.arange(self.elevation_range[0], self.elevation_range[1] + 0.5 * self.elevation_step,
                       self.elevation_step)
        return az, el

    def directions(self) -> np.ndarray:
        az, el = self.angles()
        el_grid, az_grid = np.meshgrid(el, az, indexing="ij")
        cos_el = np.cos(el_grid)
        dirs = np.stack([cos_el * np.sin(az_grid), cos_el * np.cos(az_grid), np.sin(el_grid)], axis=-1)
        return dirs.reshape(-1, 3)


def intersect_rays(origins: np.ndarray, directions: np.ndarray, triangles: np.ndarray,
                   t_max: float = np.inf, eps: float = PARALLEL_EPS) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest triangle hit per ray: (t, triangle index), with (inf, -1) on a miss."""
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), np.shape(directions))
    directions = np.asarray(directions, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.float64)
    n_rays = directions.shape[0]
    best_t = np.full(n_rays, np.inf)
    best_idx = np.full(n_rays, -1, dtype=np.int64)
    if n_rays == 0 or triangles.shape[0] == 0:
        return best_t, best_idx
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    chunk = max(1, RAY_CHUNK // triangles.shape[0])
    for start in range(0, n_rays, chunk):
        o = origins[start:start + chunk, None, :]
        d = directions[start:start + chunk, None, :]
        pvec = np.cross(d, e2[None])
        det = np.einsum("rfk,fk->rf", pvec, e1)
        ok = np.abs(det) > eps
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0[None]
        u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None])
        v = np.einsum("rfk,rfk->rf", np.broadcast_to(d, qvec.shape), qvec) * inv_det
        t = np.einsum("rfk,fk->rf", qvec, e2) * inv_det
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > MIN_T) & (t <= t_max)
        t = np.where(hit, t, np.inf)
        idx = np.argmin(t, axis=1)
        best = t[np.arange(t.shape[0]), idx]
        best_t[start:start + chunk] = best
        best_idx[start:start + chunk] = np.where(np.isfinite(best), idx, -1)
    return best_t, best_idx


def intersect_planes(origin: np.ndarray, directions: np.ndarray, planes, t_max: float = np.inf):
    n_rays = directions.shape[0]
    best_t = np.full(n_rays, np.inf)
    best_idx = np.full(n_rays, -1, dtype=np.int64)
    for k, plane in enumerate(planes):
        normal = np.asarray(plane.normal, dtype=np.float64)
        denom = directions @ normal
        ok = np.abs(denom) > PARALLEL_EPS
        t = np.where(ok, ((np.asarray(plane.point) - origin) @ normal) / np.where(ok, denom, 1.0), np.inf)
        t = np.where((t > MIN_T) & (t <= t_max), t, np.inf)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_idx = np.where(closer, k, best_idx)
    return best_t, best_idx


def _ray_box_hits(origin: np.ndarray, directions: np.ndarray, box: np.ndarray, t_max: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions
        t0 = (box[0] - origin) * inv
        t1 = (box[1] - origin) * inv
    t_near = np.nanmax(np.minimum(t0, t1), axis=1)
    t_far = np.nanmin(np.maximum(t0, t1), axis=1)
    return (t_far >= np.maximum(t_near, 0.0)) & (t_near <= t_max)


def _mesh_groups(scene: Scene) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """All scene triangles with their part labels, plus face groups used for culling."""
    meshes = [scene.human] + ([scene.object] if scene.object is not None else [])
    triangles = np.concatenate([m.triangles() for m in meshes])
    parts = np.concatenate([m.face_part for m in meshes])
    groups = [np.flatnonzero(parts == p) for p in np.unique(parts)]
    return triangles, parts, groups


@dataclass
class ScanResult:
    cloud: LabeledPointCloud
    ray_index: np.ndarray
    t: np.ndarray


def cast_rays(scene: Scene, sensor: SensorModel = SensorModel(), range_noise: float = 0.0,
              rng: Optional[np.random.Generator] = None) -> ScanResult:
    """Nearest-hit scan; labels carry the part class and the hit face (or NO_FACE for planes)."""
    origin = np.asarray(sensor.origin, dtype=np.float64)
    directions = sensor.directions()
    triangles, parts, groups = _mesh_groups(scene)

    best_t, best_prim = intersect_planes(origin, directions, scene.planes, sensor.max_range)
    best_prim = np.where(best_prim >= 0, best_prim + triangles.shape[0], -1)
    for faces in groups:
        tris = triangles[faces]
        box = np.stack([tris.reshape(-1, 3).min(axis=0), tris.reshape(-1, 3).max(axis=0)])
        rays = np.flatnonzero(_ray_box_hits(origin, directions, box, sensor.max_range))
        if rays.size == 0:
            continue
        t, idx = intersect_rays(origin, directions[rays], tris, sensor.max_range)
        closer = t < best_t[rays]
        best_t[rays[closer]] = t[closer]
        best_prim[rays[closer]] = faces[idx[closer]]

    hit = np.flatnonzero(np.isfinite(best_t))
    t = best_t[hit]
    if range_noise > 0:
        rng = rng or np.random.default_rng(0)
        t = t + rng.normal(0.0, range_noise, size=t.shape)
    prim = best_prim[hit]
    on_mesh = prim < triangles.shape[0]
    face_id = np.where(on_mesh, prim, NO_FACE)
    part = np.where(on_mesh, parts[np.where(on_mesh, prim, 0)], BACKGROUND_CLASS)
    points = origin + directions[hit] * t[:, None]
    debug(f"cast {directions.shape[0]} rays, {hit.size} hits, {int(on_mesh.sum())} on meshes")
    if hit.size == 0:
        raise ContractError("empty-scan", "no ray hit the scene")
    cloud = LabeledPointCloud(PointCloud(points), part, np.zeros(hit.size, dtype=bool), face_id)
    return ScanResult(cloud, hit, t)


def ground_plane(z: float) -> Plane:
    return Plane((0.0, 0.0, z), (0.0, 0.0, 1.0))


def wall_plane(y: float) -> Plane:
    return Plane((0.0, y, 0.0), (0.0, -1.0, 0.0))


@dataclass
class TestScene:
    scene: Scene
    keypoints: KeypointSet
    part_vertex_map: dict
    rig: RigState


def object_keypoint(obj: Optional[TriangleMesh]) -> Tuple[np.ndarray, bool]:
    if obj is None:
        return np.zeros(3), False
    return obj.vertices.mean(axis=0), True


def rig_keypoints(rig: RigState, obj: Optional[TriangleMesh], profile_name: str = "SMPL15_OBJ") -> KeypointSet:
    profile = load_profile(profile_name)
    coords, valid = [], []
    for rig_name in profile.rig_names:
        if rig_name == "object_centroid":
            position, present = object_keypoint(obj)
        else:
            position, present = rig.position(rig_name), True
        coords.append(position)
        valid.append(present)
    return KeypointSet(np.array(coords), np.array(valid))


def place_box_under_hand(human: TriangleMesh, rig: RigState, gap: float, ground_z: float,
                         footprint: float = 0.4) -> TriangleMesh:
    """A pedestal box standing on the ground under the left hand.

    Its top lies `gap` below the lowest human vertex inside the footprint, so
    nothing overhanging the box comes closer than `gap`.
    """
    center_xy = rig.position("L_hand")[:2]
    inside = np.all(np.abs(human.vertices[:, :2] - center_xy) <= 0.5 * footprint, axis=1)
    top = human.vertices[inside, 2].min() - gap
    if top <= ground_z:
        raise ContractError("object-placement", "hand is too close to the ground for a pedestal")
    height = top - ground_z
    return make_box((center_xy[0], center_xy[1], ground_z + 0.5 * height), (footprint, footprint, height))


def make_test_scene(pose: Optional[PoseParams] = None, hand_gap: Optional[float] = 0.02,
                    ground_z: float = -1.8, wall_y: Optional[float] = None,
                    profile_name: str = "SMPL15_OBJ") -> TestScene:
    """Capsule human, an optional pedestal box under the left hand, ground (and wall) planes."""
    pose = pose or t_pose()
    human = build_human(pose)
    obj = None if hand_gap is None else place_box_under_hand(human.mesh, human.rig, hand_gap, ground_z)
    planes = [ground_plane(ground_z)]
    if wall_y is not None:
        planes.append(wall_plane(wall_y))
    scene = Scene(human.mesh, obj, tuple(planes), human.part_vertex_map)
    return TestScene(scene, rig_keypoints(human.rig, obj, profile_name), human.part_vertex_map, human.rig)


def object_dropout(scene: Scene, p: float = 0.5, rng: Optional[np.random.Generator] = None) -> Scene:
    if not 0.0 <= p <= 1.0:
        raise ContractError("dropout-probability", f"p must lie in [0, 1], got {p}")
    rng = rng or np.random.default_rng(0)
    if scene.object is not None and rng.random() < p:
        return scene.without_object()
    return scene
