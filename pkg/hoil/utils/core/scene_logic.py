import os
from typing import Optional

import numpy as np

from hoil.utils.core.config_loader import dump_json_file
from hoil.utils.core.errors import UsageError
from hoil.utils.core.pointcloud import load_profile
from hoil.utils.sim.lidar import make_test_scene
from hoil.utils.sim.mesh import save_mesh
from hoil.utils.sim.rig import gait_pose, random_pose, t_pose

SCENE_POSES = ("tpose", "gait", "random")


def scene_pose(name: str, seed: int = 0, phase: float = 0.25):
    if name == "tpose":
        return t_pose()
    if name == "gait":
        return gait_pose(phase)
    if name == "random":
        return random_pose(np.random.default_rng([seed, 7]))
    raise UsageError(f"unknown pose '{name}'; choose from {', '.join(SCENE_POSES)}")


def handle_export_scene(out_dir: str, pose: str = "tpose", hand_gap: Optional[float] = 0.02, seed: int = 0,
                        profile_name: str = "SMPL15_OBJ"):
    """Writes the procedural test scene as OBJ meshes plus label sidecars and keypoints."""
    test = make_test_scene(scene_pose(pose, seed), hand_gap=hand_gap, profile_name=profile_name)
    written = [os.path.join(out_dir, "human.obj")]
    save_mesh(test.scene.human, written[0], test.part_vertex_map)
    if test.scene.object is not None:
        written.append(os.path.join(out_dir, "object.obj"))
        save_mesh(test.scene.object, written[-1])
    profile = load_profile(profile_name)
    written.append(os.path.join(out_dir, "keypoints.json"))
    dump_json_file(written[-1], {
        "profile": profile.name,
        "pose": pose,
        "keypoints": [
            {"name": name, "position": [round(float(v), 6) for v in coords], "valid": bool(valid)}
            for name, coords, valid in zip(profile.names, test.keypoints.coords, test.keypoints.valid)
        ],
    })
    return f"Wrote {', '.join(written)}", 0
