import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from hoil.config import config
from hoil.utils.core.checkpoint import load_checkpoint, save_checkpoint
from hoil.utils.core.config_loader import dump_json_file, load_json_file
from hoil.utils.core.ctrefine import CTRefine, CTRefineConfig, train_ctrefine
from hoil.utils.core.errors import ConfigError, DataError, UsageError
from hoil.utils.core.logging import log
from hoil.utils.core.metrics import PoseEvalReport, correlation, per_frame_mpjpe, seg_accuracy
from hoil.utils.core.model import HoilModel
from hoil.utils.core.plots import plot_per_joint, plot_seg_vs_pose
from hoil.utils.core.pointcloud import KeypointProfile, KeypointSet, load_profile, remap_keypoints
from hoil.utils.core.records import FrameRecord, read_sequence
from hoil.utils.core.run_config import RunConfig, load_run_config, run_config_to_dict
from hoil.utils.core.temporal import FILTER_METHODS, apply_filter, compare_filters, write_compare_csv
from hoil.utils.core.tensor import no_grad
from hoil.utils.core.train_logic import restore_model
from hoil.utils.sim.motion import make_refine_samples

REFINE_METHODS = ("none",) + FILTER_METHODS + ("ctrefine", "all")


@dataclass
class FramePrediction:
    keypoints: KeypointSet
    seg_accuracy: float


@dataclass
class Predictions:
    frames: List[FramePrediction]
    ground_truth: List[KeypointSet]
    profile: KeypointProfile
    dt: float
    run_config: RunConfig

    @property
    def keypoints(self) -> List[KeypointSet]:
        return [f.keypoints for f in self.frames]

    def trajectory(self) -> np.ndarray:
        return np.stack([k.coords for k in self.keypoints])

    def contacts(self) -> np.ndarray:
        return np.stack([k.contact for k in self.keypoints])

    def gt_contacts(self) -> np.ndarray:
        return np.stack([k.contact for k in self.ground_truth])


def predict_frame(model: HoilModel, record: FrameRecord, gt: KeypointSet) -> FramePrediction:
    with no_grad():
        outputs = model(record.labeled_cloud().cloud)
    contact = 1.0 / (1.0 + np.exp(-outputs.keypoint_contact.data)) > 0.5
    keypoints = KeypointSet(outputs.keypoints.data, gt.valid, contact)
    return FramePrediction(keypoints, seg_accuracy(outputs.seg.data, record.part))


def predict(ckpt: str, data_dir: str, workers: Optional[int] = None) -> Predictions:
    model, cfg, profile = restore_model(ckpt)
    records, manifest = read_sequence(data_dir)
    if not records:
        raise DataError(f"{data_dir} holds no frames")
    source = load_profile(manifest.get("profile", profile.name))
    ground_truth = [r.keypoint_set() for r in records]
    if source.name != profile.name:
        ground_truth = [remap_keypoints(k, source, profile) for k in ground_truth]
    with ThreadPoolExecutor(max_workers=workers or config.HOIL_WORKERS) as pool:
        frames = list(pool.map(lambda pair: predict_frame(model, *pair), zip(records, ground_truth)))
    return Predictions(frames, ground_truth, profile, float(manifest.get("dt", cfg.sim.dt)), cfg)


def _companion(report: str, suffix: str) -> str:
    stem, _ = os.path.splitext(report)
    return f"{stem}_{suffix}"


def write_reports(report: PoseEvalReport, path: str, predictions: Optional[Predictions] = None,
                  plots: bool = False) -> List[str]:
    written = [path, _companion(path, "per_joint.csv")]
    report.write_csv(path)
    report.write_per_joint_csv(written[1])
    if plots:
        plot_per_joint(report, _companion(path, "per_joint.svg"))
        written.append(_companion(path, "per_joint.svg"))
        if predictions is not None and len(predictions.frames) >= 3:
            seg = [f.seg_accuracy for f in predictions.frames]
            errors = per_frame_mpjpe(predictions.keypoints, predictions.ground_truth)
            r = correlation(seg, errors)
            plot_seg_vs_pose(seg, errors, r, _companion(path, "seg_vs_pose.svg"))
            written.append(_companion(path, "seg_vs_pose.svg"))
    return written


def handle_eval(ckpt: str, data_dir: str, report_path: str, plots: bool = False, workers: Optional[int] = None):
    predictions = predict(ckpt, data_dir, workers)
    report = PoseEvalReport.evaluate(predictions.keypoints, predictions.ground_truth, predictions.profile.names,
                                     predictions.profile.torso)
    written = write_reports(report, report_path, predictions, plots)
    log(f"MPJPE {report.mpjpe_mm:.2f} mm, PCK-3 {report.pck3:.1f}%, PCK-5 {report.pck5:.1f}%")
    return f"Wrote {', '.join(written)}", 0


def load_refiner(path: str) -> CTRefine:
    meta_path = path + ".json"
    if not os.path.isfile(meta_path):
        raise DataError(f"refiner sidecar missing: {meta_path}")
    meta = load_json_file(meta_path, required=True)
    cfg = CTRefineConfig(**meta["ctrefine"])
    model = CTRefine(cfg, seed=int(meta.get("seed", 0)))
    entries = load_checkpoint(path)
    for name, param in model.named_parameters():
        if name not in entries or entries[name].shape != param.shape:
            raise DataError(f"refiner checkpoint {path} lacks a matching '{name}'")
        param.data[...] = entries[name]
    return model


def refine_trajectory(method: str, predictions: Predictions, filters, refiner: Optional[CTRefine] = None,
                      oracle_contact: bool = False) -> np.ndarray:
    trajectory = predictions.trajectory()
    if method == "ctrefine":
        if refiner is None:
            raise UsageError("--method ctrefine needs --refiner")
        contacts = predictions.gt_contacts() if oracle_contact else predictions.contacts()
        return refiner.refine(trajectory, contacts)
    return apply_filter(method, trajectory, filters, predictions.dt)


def handle_refine(method: str, ckpt: str, data_dir: str, report_path: str, config_path: Optional[str] = None,
                  refiner_path: Optional[str] = None, oracle_contact: bool = False, plots: bool = False,
                  workers: Optional[int] = None):
    if method not in REFINE_METHODS:
        raise UsageError(f"unknown refine method '{method}'; choose from {', '.join(REFINE_METHODS)}")
    predictions = predict(ckpt, data_dir, workers)
    filters = load_run_config(config_path).filters if config_path else predictions.run_config.filters
    refiner = load_refiner(refiner_path) if refiner_path else None
    oracle_contact = oracle_contact or (refiner is not None and refiner.cfg.oracle_contact)
    torso = predictions.profile.torso

    if method == "all":
        refiners = {}
        if refiner is not None:
            contacts = predictions.gt_contacts() if oracle_contact else predictions.contacts()
            refiners["ctrefine"] = lambda traj: refiner.refine(traj, contacts)
        rows = compare_filters(predictions.trajectory(), predictions.ground_truth, filters, predictions.dt,
                               refiners, torso)
        write_compare_csv(rows, report_path)
        return f"Wrote {report_path} ({len(rows)} methods)", 0

    refined = refine_trajectory(method, predictions, filters, refiner, oracle_contact)
    pred = [k.with_coords(refined[t]) for t, k in enumerate(predictions.keypoints)]
    report = PoseEvalReport.evaluate(pred, predictions.ground_truth, predictions.profile.names, torso)
    written = write_reports(report, report_path, None, plots)
    log(f"{method}: MPJPE {report.mpjpe_mm:.2f} mm")
    return f"Wrote {', '.join(written)}", 0


def handle_ctrefine_train(config_path: Optional[str], out: str, samples: int = 20, frames: int = 32,
                          steps: Optional[int] = None):
    cfg = load_run_config(config_path)
    if samples < 1 or frames < 2:
        raise UsageError("--samples must be at least 1 and --frames at least 2")
    if frames > cfg.ctrefine.max_frames:
        raise ConfigError(f"--frames {frames} exceeds ctrefine.max_frames={cfg.ctrefine.max_frames}")
    data = make_refine_samples(samples, frames, cfg.sim.dt, cfg.ctrefine.noise_sigma, cfg.seed,
                               cfg.finetune_profile)
    model = CTRefine(cfg.ctrefine, seed=cfg.seed)
    losses = train_ctrefine(model, data, steps, seed=cfg.seed)
    save_checkpoint(out, model.state_dict())
    dump_json_file(out + ".json", {
        "ctrefine": run_config_to_dict(cfg)["ctrefine"],
        "seed": cfg.seed,
        "profile": cfg.finetune_profile,
        "final_loss": losses[-1] if losses else None,
    })
    return f"Trained CTRefine for {len(losses)} steps; weights at {out}", 0
