"""
Pose and segmentation metrics.

Errors are reported in millimeters over (frame, joint) pairs valid in both
prediction and ground truth. PCK normalizes by the ground-truth torso length
of each frame and counts strictly-below-threshold joints.
"""
import csv
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from hoil.utils.core.errors import ContractError
from hoil.utils.core.logging import warn
from hoil.utils.core.pointcloud import KeypointSet, torso_length

MM = 1000.0
Frames = Union[KeypointSet, Sequence[KeypointSet]]


def _as_frames(frames: Frames) -> List[KeypointSet]:
    if isinstance(frames, KeypointSet):
        return [frames]
    return list(frames)


def _stack(pred: Frames, gt: Frames) -> Tuple[List[KeypointSet], np.ndarray, np.ndarray]:
    """Ground-truth frames, per-pair errors in mm (T x N_k) and the joint validity mask."""
    pred, gt = _as_frames(pred), _as_frames(gt)
    if len(pred) != len(gt):
        raise ContractError("frame-count", f"{len(pred)} predicted frames for {len(gt)} ground-truth frames")
    if not gt:
        raise ContractError("no-frames", "no frames to evaluate")
    if any(len(p) != len(g) for p, g in zip(pred, gt)):
        raise ContractError("keypoint-count", "prediction and ground truth differ in N_k")
    errors = np.stack([np.linalg.norm(p.coords - g.coords, axis=1) for p, g in zip(pred, gt)]) * MM
    valid = np.stack([p.valid & g.valid for p, g in zip(pred, gt)])
    return gt, np.where(valid, errors, 0.0), valid


def mpjpe(pred: Frames, gt: Frames) -> float:
    _, errors, valid = _stack(pred, gt)
    if not valid.any():
        raise ContractError("no-valid-joints", "no joint is valid in both prediction and ground truth")
    return float(errors[valid].mean())


def per_frame_mpjpe(pred: Frames, gt: Frames) -> np.ndarray:
    """MPJPE per frame; NaN for frames without a valid joint."""
    _, errors, valid = _stack(pred, gt)
    counts = valid.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, errors.sum(axis=1) / np.maximum(counts, 1), np.nan)


def per_joint_error(pred: Frames, gt: Frames) -> np.ndarray:
    """Mean error per joint in mm; NaN marks a joint that is never valid."""
    _, errors, valid = _stack(pred, gt)
    counts = valid.sum(axis=0)
    return np.where(counts > 0, errors.sum(axis=0) / np.maximum(counts, 1), np.nan)


def pck(pred: Frames, gt: Frames, fraction: float, torso: Optional[Tuple[int, int, int, int]] = None) -> float:
    """Percentage of valid joints with error < fraction * torso length of the ground-truth frame."""
    if not fraction > 0:
        raise ContractError("pck-fraction", "fraction must be positive")
    gt_frames, errors, valid = _stack(pred, gt)
    hits = total = 0
    for t, frame in enumerate(gt_frames):
        try:
            length = torso_length(frame, torso)
        except ContractError as e:
            warn(f"PCK: frame {t} excluded ({e})")
            continue
        if length == 0.0:
            warn(f"PCK: frame {t} excluded (degenerate torso)")
            continue
        threshold = fraction * length * MM
        hits += int(np.sum(valid[t] & (errors[t] < threshold)))
        total += int(valid[t].sum())
    if total == 0:
        raise ContractError("no-valid-joints", "no frame left to score after torso checks")
    return 100.0 * hits / total


def seg_accuracy(pred: np.ndarray, gt_parts: np.ndarray) -> float:
    """Argmax accuracy in percent; `pred` holds N x C scores or N labels."""
    pred = np.asarray(pred)
    gt_parts = np.asarray(gt_parts, dtype=np.int64)
    labels = pred.argmax(axis=1) if pred.ndim == 2 else pred.astype(np.int64)
    if labels.shape != gt_parts.shape:
        raise ContractError("seg-shape", f"{labels.shape} predictions for {gt_parts.shape} labels")
    if gt_parts.size == 0:
        raise ContractError("no-points", "segmentation accuracy of an empty cloud")
    return 100.0 * float(np.mean(labels == gt_parts))


def correlation(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Pearson r between two per-frame series; None when either series is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("series-shape", f"series shapes {x.shape} and {y.shape} differ")
    if x.size < 3:
        raise ContractError("series-length", "correlation needs at least 3 frames")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        warn("correlation undefined: zero variance in one series")
        return None
    r = float(stats.pearsonr(x, y)[0])
    return float(np.clip(r, -1.0, 1.0))


@dataclass
class PoseEvalReport:
    mpjpe_mm: float
    pck3: float
    pck5: float
    per_joint_mm: np.ndarray
    n_frames: int
    joint_names: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("pck3", "pck5"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ContractError("pck-range", f"{name}={value} outside [0, 100]")
        if self.pck5 < self.pck3:
            raise ContractError("pck-order", "PCK-5 below PCK-3")

    @classmethod
    def evaluate(cls, pred: Frames, gt: Frames, joint_names: Sequence[str] = (),
                 torso: Optional[Tuple[int, int, int, int]] = None) -> "PoseEvalReport":
        gt_frames = _as_frames(gt)
        return cls(
            mpjpe_mm=mpjpe(pred, gt_frames),
            pck3=pck(pred, gt_frames, 0.3, torso),
            pck5=pck(pred, gt_frames, 0.5, torso),
            per_joint_mm=per_joint_error(pred, gt_frames),
            n_frames=len(gt_frames),
            joint_names=tuple(joint_names),
        )

    def summary_rows(self) -> List[Tuple[str, str]]:
        return [
            ("mpjpe_mm", f"{self.mpjpe_mm:.6f}"),
            ("pck3", f"{self.pck3:.6f}"),
            ("pck5", f"{self.pck5:.6f}"),
            ("n_frames", str(self.n_frames)),
        ]

    def joint_rows(self) -> List[Tuple[str, str, str]]:
        rows = []
        for j, error in enumerate(self.per_joint_mm):
            name = self.joint_names[j] if j < len(self.joint_names) else f"joint{j}"
            rows.append((str(j), name, "absent" if np.isnan(error) else f"{error:.6f}"))
        return rows

    def write_csv(self, path: str):
        _write_rows(path, ("metric", "value"), self.summary_rows())

    def write_per_joint_csv(self, path: str):
        _write_rows(path, ("joint_index", "joint_name", "error_mm"), self.joint_rows())


def _write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence[str]]):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
