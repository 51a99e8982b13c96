import numpy as np
import pytest

from hoil.utils.core.errors import ContractError
from hoil.utils.sim.rig import (
    CAPSULES, JOINT_NAMES, PoseParams, build_human, forward_kinematics, gait_pose, random_pose, t_pose,
)


def test_root_yaw_turns_the_body_toward_the_sensor():
    rig = forward_kinematics(t_pose())
    root = np.array(t_pose().root_position)
    np.testing.assert_allclose(rig.position("pelvis"), root)
    np.testing.assert_allclose(rig.position("L_hip") - root, [-0.09, 0.0, -0.08], atol=1e-12)


def test_with_rotation_moves_only_the_subtree():
    rest = t_pose()
    bent = rest.with_rotation("L_knee", [1.0, 0.0, 0.0])
    assert np.all(rest.rotations == 0)
    a, b = forward_kinematics(rest), forward_kinematics(bent)
    np.testing.assert_allclose(a.position("R_ankle"), b.position("R_ankle"))
    np.testing.assert_allclose(a.position("L_knee"), b.position("L_knee"))
    assert np.linalg.norm(a.position("L_ankle") - b.position("L_ankle")) > 0.1
    np.testing.assert_allclose(np.linalg.norm(b.position("L_ankle") - b.position("L_knee")), 0.40, atol=1e-12)


def test_pose_validation():
    with pytest.raises(ContractError, match="pose-shape"):
        PoseParams(np.zeros((23, 3)))
    with pytest.raises(ContractError, match="joint-limit"):
        t_pose().with_rotation("L_elbow", [3.0, 0.0, 0.0])
    with pytest.raises(ContractError, match="pose-finite"):
        t_pose().with_rotation("head", [np.nan, 0.0, 0.0])


def test_placement_keeps_rotations():
    pose = gait_pose(0.25, position=(1.0, 5.0, 0.0), yaw=0.0)
    assert pose.root_position == (1.0, 5.0, 0.0) and pose.root_yaw == 0.0
    np.testing.assert_array_equal(pose.rotations, gait_pose(0.25).rotations)


def test_random_pose_is_seeded():
    a = random_pose(np.random.default_rng(3))
    b = random_pose(np.random.default_rng(3))
    np.testing.assert_array_equal(a.rotations, b.rotations)


def test_human_mesh_labels_every_part():
    human = build_human(t_pose())
    assert sorted(np.unique(human.mesh.face_part).tolist()) == list(range(len(CAPSULES)))
    owned = np.concatenate([human.part_vertex_map[p] for p in range(len(CAPSULES))])
    np.testing.assert_array_equal(np.sort(owned), np.arange(human.mesh.vertices.shape[0]))
    for part, vertices in human.part_vertex_map.items():
        faces = human.mesh.faces[human.mesh.face_part == part]
        assert np.isin(faces, vertices).all()


def test_t_pose_stands_on_the_ground():
    lowest = build_human(t_pose()).mesh.vertices[:, 2].min()
    assert -1.8 - 1e-9 <= lowest < -1.75
    assert len(JOINT_NAMES) == 24
