"""Static SVG figures written from report data."""
import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from hoil.utils.core.metrics import PoseEvalReport  # noqa: E402

SVG_SALT = "hoil"


def _save(fig, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_per_joint(report: PoseEvalReport, path: str):
    errors = np.nan_to_num(report.per_joint_mm, nan=0.0)
    names = [name for _, name, _ in report.joint_rows()]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bar(np.arange(len(errors)), errors, color="#4c72b0")
    ax.axhline(report.mpjpe_mm, color="#333333", linestyle="--", linewidth=1.0, label="MPJPE")
    ax.set_xticks(np.arange(len(errors)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("error (mm)")
    ax.set_title("Error by joint")
    ax.grid(alpha=0.25, axis="y")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_seg_vs_pose(seg_accuracy: Sequence[float], mpjpe_mm: Sequence[float], r: Optional[float], path: str):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(seg_accuracy, mpjpe_mm, s=12, color="#dd8452")
    ax.set_xlabel("segmentation accuracy (%)")
    ax.set_ylabel("MPJPE (mm)")
    ax.set_title("r undefined" if r is None else f"r = {r:.2f}")
    ax.grid(alpha=0.25)
    fig.tight_layout()
    _save(fig, path)


def plot_loss_curve(steps: Sequence[int], totals: Sequence[float], path: str):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(steps, totals, color="#55a868", linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.25)
    fig.tight_layout()
    _save(fig, path)
