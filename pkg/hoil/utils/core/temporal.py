"""
Post-hoc trajectory filters and the filter comparison table.

Every filter takes a T x N_k x 3 trajectory and treats each coordinate of
each keypoint as an independent 1-D signal.
"""
import csv
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal

from hoil.utils.core.errors import ContractError
from hoil.utils.core.logging import debug
from hoil.utils.core.metrics import mpjpe, pck
from hoil.utils.core.pointcloud import KeypointSet

FILTER_METHODS = ("gaussian", "sg", "oneeuro")


@dataclass(frozen=True)
class FilterConfig:
    gaussian_sigma: float = 1.5
    gaussian_truncate: float = 4.0
    sg_window: int = 7
    sg_order: int = 2
    min_cutoff: float = 1.0
    beta: float = 0.007
    d_cutoff: float = 1.0

    def __post_init__(self):
        if not self.gaussian_sigma > 0:
            raise ContractError("filter-sigma", "gaussian_sigma must be positive")
        if self.sg_window % 2 != 1 or self.sg_window <= self.sg_order:
            raise ContractError("filter-window", "sg_window must be odd and larger than sg_order")
        if self.sg_order < 0:
            raise ContractError("filter-order", "sg_order must be non-negative")
        if not (self.min_cutoff > 0 and self.d_cutoff > 0 and self.beta >= 0):
            raise ContractError("filter-cutoff", "cutoffs must be positive and beta non-negative")


def _check_trajectory(trajectory: np.ndarray, min_frames: int, method: str) -> np.ndarray:
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim != 3 or trajectory.shape[2] != 3:
        raise ContractError("trajectory-shape", f"expected T x N_k x 3, got {trajectory.shape}")
    if trajectory.shape[0] < min_frames:
        raise ContractError("sequence-length", f"{method} needs at least {min_frames} frames, got {trajectory.shape[0]}")
    return trajectory


def gaussian_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    radius = max(1, int(math.ceil(truncate * sigma)))
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (taps / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_smooth(trajectory: np.ndarray, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    trajectory = _check_trajectory(trajectory, 2, "gaussian")
    kernel = gaussian_kernel(cfg.gaussian_sigma, cfg.gaussian_truncate)
    return ndimage.correlate1d(trajectory, kernel, axis=0, mode="reflect")


def savitzky_golay(trajectory: np.ndarray, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    trajectory = _check_trajectory(trajectory, cfg.sg_window, "savitzky-golay")
    return signal.savgol_filter(trajectory, cfg.sg_window, cfg.sg_order, axis=0, mode="mirror")


def _smoothing_factor(period: float, cutoff):
    r = 2.0 * np.pi * cutoff * period
    return r / (r + 1.0)


class OneEuroFilter:
    """Speed-adaptive low-pass over arrays of signals; the first sample passes through."""

    def __init__(self, dt: float, min_cutoff: float = 1.0, beta: float = 0.007, d_cutoff: float = 1.0):
        if not dt > 0:
            raise ContractError("sequence-dt", "dt must be positive")
        self.dt = dt
        self.min_cutoff = min_cutoff
        self.beta = beta
        self.d_cutoff = d_cutoff
        self.x_prev: Optional[np.ndarray] = None
        self.dx_prev: Optional[np.ndarray] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.x_prev is None:
            self.x_prev = x.copy()
            self.dx_prev = np.zeros_like(x)
            return x.copy()
        a_d = _smoothing_factor(self.dt, self.d_cutoff)
        dx = (x - self.x_prev) / self.dt
        dx_hat = a_d * dx + (1.0 - a_d) * self.dx_prev
        cutoff = self.min_cutoff + self.beta * np.abs(dx_hat)
        a = _smoothing_factor(self.dt, cutoff)
        x_hat = a * x + (1.0 - a) * self.x_prev
        self.x_prev = x_hat
        self.dx_prev = dx_hat
        return x_hat


def one_euro(trajectory: np.ndarray, cfg: FilterConfig = FilterConfig(), dt: float = 0.1) -> np.ndarray:
    trajectory = _check_trajectory(trajectory, 1, "one-euro")
    filt = OneEuroFilter(dt, cfg.min_cutoff, cfg.beta, cfg.d_cutoff)
    return np.stack([filt(frame) for frame in trajectory])


def apply_filter(method: str, trajectory: np.ndarray, cfg: FilterConfig = FilterConfig(), dt: float = 0.1):
    if method == "none":
        return np.array(trajectory, dtype=np.float64)
    if method == "gaussian":
        return gaussian_smooth(trajectory, cfg)
    if method == "sg":
        return savitzky_golay(trajectory, cfg)
    if method == "oneeuro":
        return one_euro(trajectory, cfg, dt)
    raise ContractError("filter-method", f"unknown filter '{method}'")


@dataclass(frozen=True)
class FilterRow:
    method: str
    mpjpe_mm: float
    pck3: float
    pck5: float


def _frames_like(trajectory: np.ndarray, gt: Sequence[KeypointSet]) -> List[KeypointSet]:
    return [g.with_coords(trajectory[t]) for t, g in enumerate(gt)]


def score_trajectory(method: str, trajectory: np.ndarray, gt: Sequence[KeypointSet],
                     torso: Optional[Tuple[int, int, int, int]] = None) -> FilterRow:
    pred = _frames_like(trajectory, gt)
    return FilterRow(method, mpjpe(pred, gt), pck(pred, gt, 0.3, torso), pck(pred, gt, 0.5, torso))


def compare_filters(trajectory: np.ndarray, gt: Sequence[KeypointSet], cfg: FilterConfig = FilterConfig(),
                    dt: float = 0.1, refiners: Optional[Dict[str, Callable[[np.ndarray], np.ndarray]]] = None,
                    torso: Optional[Tuple[int, int, int, int]] = None) -> List[FilterRow]:
    """The unrefined baseline, then every filter, then any learned refiners."""
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.shape[0] != len(gt):
        raise ContractError("frame-count", f"{trajectory.shape[0]} frames for {len(gt)} ground-truth frames")
    rows = [score_trajectory("none", trajectory, gt, torso)]
    for method in FILTER_METHODS:
        rows.append(score_trajectory(method, apply_filter(method, trajectory, cfg, dt), gt, torso))
    for name, refine in (refiners or {}).items():
        rows.append(score_trajectory(name, refine(trajectory), gt, torso))
    debug("compare: " + ", ".join(f"{r.method}={r.mpjpe_mm:.2f}" for r in rows))
    return rows


def write_compare_csv(rows: Sequence[FilterRow], path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("method", "mpjpe_mm", "pck3", "pck5"))
        for row in rows:
            writer.writerow((row.method, f"{row.mpjpe_mm:.6f}", f"{row.pck3:.6f}", f"{row.pck5:.6f}"))
