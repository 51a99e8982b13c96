import numpy as np
import pytest
import trimesh

from hoil.utils.core.errors import ContractError, DataError
from hoil.utils.core.pointcloud import BACKGROUND_CLASS, NO_FACE, OBJECT_CLASS, validate
from hoil.utils.sim.lidar import (
    SensorModel, cast_rays, intersect_planes, intersect_rays, make_test_scene, object_dropout, ground_plane,
)
from hoil.utils.sim.mesh import Scene, TriangleMesh, load_mesh, make_box, save_mesh

SMALL_SENSOR = SensorModel(azimuth_range=(np.radians(-12.0), np.radians(12.0)), azimuth_step=np.radians(0.5),
                           elevation_range=(np.radians(-16.0), np.radians(4.0)), elevation_step=np.radians(0.5))


def solve_hits(origin, directions, triangles):
    """Nearest hit per ray by solving o + t d = v0 + u e1 + v e2 for every pair."""
    n = directions.shape[0]
    best_t = np.full(n, np.inf)
    best_idx = np.full(n, -1)
    for f, (v0, v1, v2) in enumerate(triangles):
        system = np.stack([-directions, np.broadcast_to(v1 - v0, (n, 3)), np.broadcast_to(v2 - v0, (n, 3))], axis=2)
        t, u, v = np.linalg.solve(system, np.broadcast_to(origin - v0, (n, 3))[..., None])[..., 0].T
        hit = (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9) & (t < best_t)
        best_t[hit] = t[hit]
        best_idx[hit] = f
    return best_t, best_idx


def test_single_triangle_hit_and_miss():
    triangle = np.array([[[-1.0, 2.0, -1.0], [1.0, 2.0, -1.0], [0.0, 2.0, 1.0]]])
    dirs = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.6, 0.8]])
    t, idx = intersect_rays(np.zeros(3), dirs, triangle)
    assert t[0] == pytest.approx(2.0) and idx[0] == 0
    assert np.isinf(t[1]) and idx[1] == -1
    assert np.isinf(t[2]) and idx[2] == -1
    assert np.isinf(t[3])


def test_intersection_matches_brute_force(rng):
    centers = rng.uniform([-1.5, 2.0, -1.5], [1.5, 6.0, 1.5], size=(500, 1, 3))
    triangles = centers + rng.uniform(-0.3, 0.3, size=(500, 3, 3))
    dirs = rng.uniform([-0.4, 1.0, -0.4], [0.4, 1.0, 0.4], size=(1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, idx = intersect_rays(np.zeros(3), dirs, triangles)
    ref_t, ref_idx = solve_hits(np.zeros(3), dirs, triangles)
    assert np.isfinite(t).sum() > 100
    np.testing.assert_array_equal(np.isfinite(t), np.isfinite(ref_t))
    hit = np.isfinite(t)
    np.testing.assert_allclose(t[hit], ref_t[hit], rtol=1e-9)
    np.testing.assert_array_equal(idx[hit], ref_idx[hit])


def test_plane_hits_respect_range():
    dirs = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    t, idx = intersect_planes(np.zeros(3), dirs, [ground_plane(-2.0)])
    assert t[0] == pytest.approx(2.0) and idx[0] == 0
    assert np.isinf(t[1]) and np.isinf(t[2])
    t, _ = intersect_planes(np.zeros(3), dirs, [ground_plane(-2.0)], t_max=1.0)
    assert np.isinf(t[0])


def test_scan_labels_are_consistent(test_scene):
    scan = cast_rays(test_scene.scene, SMALL_SENSOR)
    cloud = scan.cloud
    assert validate(cloud) == []
    parts = set(np.unique(cloud.part).tolist())
    assert OBJECT_CLASS in parts and BACKGROUND_CLASS in parts and len(parts) > 4
    background = cloud.part == BACKGROUND_CLASS
    assert np.all(cloud.face_id[background] == NO_FACE)
    np.testing.assert_allclose(cloud.coords[background, 2], -1.8, atol=1e-9)


def test_scan_points_lie_on_their_faces(test_scene):
    scan = cast_rays(test_scene.scene, SMALL_SENSOR)
    cloud = scan.cloud
    scene = test_scene.scene
    triangles = np.concatenate([scene.human.triangles(), scene.object.triangles()])
    on_mesh = np.flatnonzero(cloud.part != BACKGROUND_CLASS)
    closest = trimesh.triangles.closest_point(triangles[cloud.face_id[on_mesh]], cloud.coords[on_mesh])
    assert np.abs(closest - cloud.coords[on_mesh]).max() < 1e-9
    dirs = SMALL_SENSOR.directions()[scan.ray_index]
    np.testing.assert_allclose(cloud.coords, dirs * scan.t[:, None], atol=1e-12)


def test_scan_is_deterministic(test_scene):
    a = cast_rays(test_scene.scene, SMALL_SENSOR, range_noise=0.01, rng=np.random.default_rng(5))
    b = cast_rays(test_scene.scene, SMALL_SENSOR, range_noise=0.01, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(a.cloud.coords, b.cloud.coords)
    np.testing.assert_array_equal(a.cloud.part, b.cloud.part)


def test_scan_of_empty_view_raises(test_scene):
    skyward = SensorModel(azimuth_range=(0.0, 0.1), azimuth_step=0.05, elevation_range=(1.2, 1.3),
                          elevation_step=0.05)
    with pytest.raises(ContractError, match="empty-scan"):
        cast_rays(Scene(test_scene.scene.human), skyward)


def test_sensor_validation():
    with pytest.raises(ContractError):
        SensorModel(azimuth_step=0.0)
    with pytest.raises(ContractError):
        SensorModel(elevation_range=(0.1, -0.1))


def test_test_scene_keypoints():
    with_obj = make_test_scene()
    without = make_test_scene(hand_gap=None)
    assert len(with_obj.keypoints) == 16
    assert with_obj.keypoints.valid[-1] and not without.keypoints.valid[-1]
    assert without.scene.object is None
    top = with_obj.scene.object.bounds()[1, 2]
    assert top < with_obj.scene.human.vertices[:, 2].max()


def test_object_dropout():
    scene = make_test_scene().scene
    assert object_dropout(scene, 0.0).object is not None
    assert object_dropout(scene, 1.0).object is None
    with pytest.raises(ContractError):
        object_dropout(scene, 1.5)


def test_mesh_rejects_bad_faces():
    vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    with pytest.raises(ContractError, match="degenerate-face"):
        TriangleMesh(vertices, [[0, 1, 3]], [0])
    with pytest.raises(ContractError, match="face-part"):
        TriangleMesh(vertices, [[0, 1, 2]], [BACKGROUND_CLASS])
    with pytest.raises(ContractError, match="face-index"):
        TriangleMesh(vertices, [[0, 1, 4]], [0])


def test_box_bounds():
    box = make_box((1.0, 2.0, 0.5), (0.4, 0.6, 1.0), subdivisions=1)
    np.testing.assert_allclose(box.bounds(), [[0.8, 1.7, 0.0], [1.2, 2.3, 1.0]])
    assert np.all(box.face_part == OBJECT_CLASS)


def test_mesh_files_roundtrip(tmp_path, test_scene):
    path = str(tmp_path / "human.obj")
    save_mesh(test_scene.scene.human, path, test_scene.part_vertex_map)
    mesh, vertex_map = load_mesh(path)
    assert mesh.num_faces == test_scene.scene.human.num_faces
    np.testing.assert_array_equal(mesh.face_part, test_scene.scene.human.face_part)
    np.testing.assert_allclose(mesh.bounds(), test_scene.scene.human.bounds(), atol=1e-6)
    assert sorted(vertex_map) == sorted(test_scene.part_vertex_map)
    with pytest.raises(DataError):
        load_mesh(str(tmp_path / "missing.obj"))
