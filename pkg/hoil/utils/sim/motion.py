"""
Motion for simulated sequences: per-frame poses and keypoint trajectories.

The gait cycle walks in place; the left leg swings while sin(2*pi*phase) > 0
and stands otherwise, the right leg the other way round.
"""
from typing import List, Optional

import numpy as np

from hoil.utils.core.errors import ContractError
from hoil.utils.core.ctrefine import RefineSample
from hoil.utils.core.pointcloud import KeypointProfile, load_profile
from hoil.utils.sim.rig import PoseParams, forward_kinematics, gait_pose, random_pose

MOTIONS = ("gait", "random")


def gait_phase(frame: int, dt: float, cadence: float, phase0: float = 0.0) -> float:
    return float((phase0 + frame * dt * cadence) % 1.0)


def frame_pose(motion: str, frame: int, dt: float, rng: np.random.Generator, cadence: float = 1.0,
               phase0: float = 0.0, pose_scale: float = 0.35) -> PoseParams:
    if motion == "gait":
        return gait_pose(gait_phase(frame, dt, cadence, phase0))
    if motion == "random":
        return random_pose(rng, pose_scale)
    raise ContractError("motion", f"unknown motion '{motion}'; expected one of {MOTIONS}")


def rig_trajectory(poses: List[PoseParams], profile: KeypointProfile) -> np.ndarray:
    """Human keypoints per frame (T x N_k x 3); object keypoints are left at the origin."""
    trajectory = np.zeros((len(poses), profile.num_keypoints, 3))
    for t, pose in enumerate(poses):
        rig = forward_kinematics(pose)
        for k, name in enumerate(profile.rig_names):
            if name != "object_centroid":
                trajectory[t, k] = rig.position(name)
    return trajectory


def stance_contact(num_frames: int, dt: float, profile: KeypointProfile, cadence: float = 1.0,
                   phase0: float = 0.0) -> np.ndarray:
    """Ground contact of the ankle keypoints from the gait phase."""
    contact = np.zeros((num_frames, profile.num_keypoints), dtype=bool)
    swing = np.sin(2 * np.pi * np.array([gait_phase(t, dt, cadence, phase0) for t in range(num_frames)]))
    contact[:, profile.index("left_ankle")] = swing <= 0
    contact[:, profile.index("right_ankle")] = swing >= 0
    return contact


def pin_contacts(trajectory: np.ndarray, contact: np.ndarray) -> np.ndarray:
    """Holds each keypoint still through a run of contact frames, at the run's first position."""
    pinned = np.array(trajectory, dtype=np.float64)
    for k in range(pinned.shape[1]):
        anchor = None
        for t in range(pinned.shape[0]):
            if contact[t, k]:
                anchor = pinned[t, k].copy() if anchor is None else anchor
                pinned[t, k] = anchor
            else:
                anchor = None
    return pinned


def gait_trajectory(num_frames: int, dt: float, profile_name: str = "SMPL15", cadence: float = 1.0,
                    phase0: float = 0.0):
    """Contact-pinned gait keypoints and their contact flags."""
    if num_frames < 2:
        raise ContractError("sequence-length", "a gait trajectory needs at least 2 frames")
    profile = load_profile(profile_name)
    poses = [gait_pose(gait_phase(t, dt, cadence, phase0)) for t in range(num_frames)]
    contact = stance_contact(num_frames, dt, profile, cadence, phase0)
    return pin_contacts(rig_trajectory(poses, profile), contact), contact


def make_refine_samples(count: int, num_frames: int = 32, dt: float = 0.1, sigma: float = 0.03,
                        seed: int = 0, profile_name: str = "SMPL15",
                        contact_noise: Optional[float] = None) -> List[RefineSample]:
    """Noisy/clean trajectory pairs; every sample starts at its own seeded gait phase."""
    samples = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        target, contact = gait_trajectory(num_frames, dt, profile_name, phase0=float(rng.random()))
        noisy = target + rng.normal(0.0, sigma, size=target.shape)
        if contact_noise:
            flips = rng.random(contact.shape) < contact_noise
            contact = contact ^ flips
        samples.append(RefineSample(noisy, contact, target))
    return samples
