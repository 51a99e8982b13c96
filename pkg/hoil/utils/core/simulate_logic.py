import os
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from hoil.config import config
from hoil.utils.core.errors import ContractError, DataError, UsageError
from hoil.utils.core.gridpool import voxelize
from hoil.utils.core.logging import debug, log
from hoil.utils.core.pointcloud import OBJECT_CLASS, KeypointProfile, KeypointSet, LabeledPointCloud, load_profile
from hoil.utils.core.records import FrameRecord, write_sequence
from hoil.utils.core.run_config import RunConfig, load_run_config, run_config_to_dict
from hoil.utils.sim.contact import keypoint_contact, propagate_contact, scene_contact, zero_velocity_contact
from hoil.utils.sim.lidar import (
    cast_rays, ground_plane, object_dropout, place_box_under_hand, rig_keypoints, wall_plane,
)
from hoil.utils.sim.mesh import Scene
from hoil.utils.sim.motion import frame_pose
from hoil.utils.sim.rig import FOOT_CLEARANCE, build_human


def crop_to_subject(cloud: LabeledPointCloud, scene: Scene, margin: float) -> LabeledPointCloud:
    """Keeps the points inside the human/object bounding box grown by `margin`."""
    boxes = [scene.human.bounds()] + ([scene.object.bounds()] if scene.object is not None else [])
    lo = np.min([b[0] for b in boxes], axis=0) - margin
    hi = np.max([b[1] for b in boxes], axis=0) + margin
    inside = np.flatnonzero(np.all((cloud.coords >= lo) & (cloud.coords <= hi), axis=1))
    if inside.size == 0:
        raise ContractError("empty-crop", "no scan point near the subject")
    return cloud.subset(inside)


def simulate_frame(cfg: RunConfig, frame: int, profile: KeypointProfile) -> FrameRecord:
    """One scan; a pure function of (config, seed, frame index)."""
    sim = cfg.sim
    rng = np.random.default_rng([cfg.seed, frame])
    pose = frame_pose(sim.motion, frame, sim.dt, rng, sim.cadence, 0.0, sim.pose_scale)
    pose = pose.placed((0.0, sim.subject_distance, sim.ground_z + FOOT_CLEARANCE))
    human = build_human(pose)

    obj = None
    if sim.with_object:
        gap = rng.uniform(*sim.hand_gap_range)
        try:
            obj = place_box_under_hand(human.mesh, human.rig, gap, sim.ground_z)
        except ContractError as e:
            debug(f"frame {frame}: no object ({e})")
    planes = [ground_plane(sim.ground_z)] + ([wall_plane(sim.wall_y)] if sim.wall_y is not None else [])
    scene = Scene(human.mesh, obj, tuple(planes), human.part_vertex_map)
    scene = object_dropout(scene, sim.object_dropout, rng)

    labels = scene_contact(scene, cfg.contact)
    scan = cast_rays(scene, sim.sensor(), sim.range_noise, rng)
    cloud = propagate_contact(scan.cloud, labels.face_flags())
    cloud = crop_to_subject(cloud, scene, sim.crop_margin)
    cloud = cloud.subset(voxelize(cloud.coords, cfg.model.grid.base_grid_size))
    if len(cloud) > sim.max_points:
        cloud = cloud.subset(np.sort(rng.choice(len(cloud), size=sim.max_points, replace=False)))

    keypoints = rig_keypoints(human.rig, scene.object, profile.name)
    flags = keypoint_contact(labels.human_vertex, labels.object_vertex if scene.object is not None else None,
                             human.part_vertex_map, profile)
    keypoints = KeypointSet(keypoints.coords, keypoints.valid, flags & keypoints.valid)
    debug(f"frame {frame}: {len(cloud)} points, {int(cloud.contact.sum())} in contact")
    return FrameRecord.from_frame(frame, cloud, keypoints)


def apply_zero_velocity(records: List[FrameRecord], cfg: RunConfig, profile: KeypointProfile) -> List[FrameRecord]:
    """Replaces human keypoint contact by the zero-velocity heuristic; the object keypoint keeps mesh contact."""
    trajectory = np.stack([r.keypoints.astype(np.float64) for r in records])
    flags = zero_velocity_contact(trajectory, cfg.sim.dt, cfg.sim.zero_velocity_threshold,
                                  cfg.sim.zero_velocity_window)
    human = np.array([OBJECT_CLASS not in parts for parts in profile.parts])
    updated = []
    for t, r in enumerate(records):
        kp_contact = np.where(human, flags[t], r.kp_contact.astype(bool)) & r.kp_valid.astype(bool)
        updated.append(FrameRecord(r.frame_index, r.points, r.part, r.contact, r.keypoints, r.kp_valid, kp_contact))
    return updated


def simulate(cfg: RunConfig, frames: int, workers: Optional[int] = None) -> List[FrameRecord]:
    if frames < 1:
        raise UsageError("--frames must be at least 1")
    profile = load_profile(cfg.profile)
    with ThreadPoolExecutor(max_workers=workers or config.HOIL_WORKERS) as pool:
        records = list(pool.map(lambda k: simulate_frame(cfg, k, profile), range(frames)))
    if cfg.sim.keypoint_contact == "zero_velocity":
        records = apply_zero_velocity(records, cfg, profile)
    return records


def handle_simulate(config_path: Optional[str], frames: int, out_dir: str, workers: Optional[int] = None):
    cfg = load_run_config(config_path)
    if frames is None or frames < 1:
        raise UsageError("--frames must be at least 1")
    if os.path.exists(out_dir) and not os.path.isdir(out_dir):
        raise DataError(f"output path {out_dir} exists and is not a directory")
    log(f"Simulating {frames} frames with seed {cfg.seed}...")
    records = simulate(cfg, frames, workers)
    manifest = {
        "profile": cfg.profile,
        "dt": cfg.sim.dt,
        "seed": cfg.seed,
        "points": [r.num_points for r in records],
        "config": run_config_to_dict(cfg),
    }
    write_sequence(out_dir, records, manifest)
    return f"Wrote {len(records)} frames to {out_dir}", 0
