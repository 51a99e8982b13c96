"""
Seeded training loops for both phases.

Each step draws a batch as a pure function of (seed, step), averages the
per-frame losses and takes one AdamW step. A checkpoint plus its JSON
sidecar is written at every epoch boundary, so a resumed run replays the
remaining steps bit for bit.
"""
import csv
import dataclasses
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hoil.utils.core.checkpoint import load_checkpoint, save_checkpoint
from hoil.utils.core.config_loader import dump_json_file, load_json_file
from hoil.utils.core.dataset import DatasetMix
from hoil.utils.core.errors import ConfigError, DataError, NumericalError
from hoil.utils.core.logging import debug, log
from hoil.utils.core.losses import (
    FrameLabels, LossResult, default_hierarchy, finetune_loss, make_tsc_targets, pretrain_loss,
)
from hoil.utils.core.model import HoilModel, Mode
from hoil.utils.core.optim import AdamW
from hoil.utils.core.plots import plot_loss_curve
from hoil.utils.core.pointcloud import KeypointProfile, load_part_catalog, load_profile, remap_keypoints
from hoil.utils.core.records import FrameRecord, read_sequence
from hoil.utils.core.run_config import RunConfig, load_run_config, run_config_from_dict, run_config_to_dict
from hoil.utils.core.tensor import Tensor, add, backward, mul

PRETRAIN_TERMS = ("seg", "contact", "coord", "keypoint_contact", "hoicl", "cppool")
FINETUNE_TERMS = ("heatmap", "limb")


@dataclass
class TrainingFrames:
    mix: DatasetMix
    profile: KeypointProfile
    count: int


@dataclass
class TrainSummary:
    checkpoint: str
    steps: int
    losses: List[float]
    breakdowns: List[Dict[str, float]]


def profile_for(cfg: RunConfig, mode: Mode) -> KeypointProfile:
    return load_profile(cfg.profile if Mode(mode) == Mode.PRETRAIN else cfg.finetune_profile)


def build_model(cfg: RunConfig, mode: Mode, profile: KeypointProfile,
                tsc_targets: Optional[np.ndarray] = None) -> HoilModel:
    model_cfg = dataclasses.replace(cfg.model, num_keypoints=profile.num_keypoints)
    if Mode(mode) == Mode.PRETRAIN and tsc_targets is None:
        tsc_targets = make_tsc_targets(dim=model_cfg.projection_dim, seed=cfg.seed)
    return HoilModel(model_cfg, mode, cfg.cppool, seed=cfg.seed, tsc_targets=tsc_targets)


def load_training_frames(cfg: RunConfig, data_dirs: Sequence[str]) -> TrainingFrames:
    if not data_dirs:
        raise DataError("no data directory given")
    sources, profiles = [], set()
    for directory in data_dirs:
        records, manifest = read_sequence(directory)
        if not records:
            raise DataError(f"{directory} holds no frames")
        sources.append(records)
        profiles.add(manifest.get("profile", cfg.profile))
    if len(profiles) != 1:
        raise DataError(f"data directories mix keypoint profiles: {sorted(profiles)}")
    ratios = [1.0] * len(sources)
    if cfg.dataset_mix.ratios:
        if len(cfg.dataset_mix.ratios) != len(sources):
            raise ConfigError(f"dataset_mix lists {len(cfg.dataset_mix.ratios)} ratios for {len(sources)} sources")
        ratios = list(cfg.dataset_mix.ratios)
    mix = DatasetMix(sources, ratios, cfg.seed)
    return TrainingFrames(mix, load_profile(profiles.pop()), sum(len(s) for s in sources))


def frame_labels(record: FrameRecord, source: KeypointProfile, target: KeypointProfile) -> FrameLabels:
    keypoints = record.keypoint_set()
    if source.name != target.name:
        keypoints = remap_keypoints(keypoints, source, target)
    return FrameLabels(record.part.astype(np.int64), record.contact.astype(bool), keypoints)


def frame_loss(model: HoilModel, record: FrameRecord, cfg: RunConfig, labels: FrameLabels,
               rng: np.random.Generator, profile: KeypointProfile) -> LossResult:
    outputs = model(record.labeled_cloud().cloud)
    if model.mode == Mode.PRETRAIN:
        return pretrain_loss(outputs, labels, cfg.pretrain_weights, cfg.hoicl, default_hierarchy(), rng,
                             load_part_catalog().frequently_interacting)
    return finetune_loss(outputs, labels, profile.skeleton, cfg.finetune_weights)


def batch_loss(model: HoilModel, batch: Sequence[FrameRecord], cfg: RunConfig, source: KeypointProfile,
               target: KeypointProfile, step: int) -> Tuple[Tensor, Dict[str, float]]:
    terms = PRETRAIN_TERMS if model.mode == Mode.PRETRAIN else FINETUNE_TERMS
    breakdown = {name: 0.0 for name in terms}
    total = None
    scale = 1.0 / len(batch)
    for i, record in enumerate(batch):
        rng = np.random.default_rng([cfg.seed, 5, step, i])
        result = frame_loss(model, record, cfg, frame_labels(record, source, target), rng, target)
        total = mul(result.total, scale) if total is None else add(total, mul(result.total, scale))
        for name, value in result.breakdown.items():
            breakdown[name] += value * scale
    return total, breakdown


def checkpoint_meta_path(ckpt: str) -> str:
    return ckpt + ".json"


def save_run(ckpt: str, model: HoilModel, optimizer: AdamW, cfg: RunConfig, profile: KeypointProfile,
             step: int, epoch: int):
    entries = model.state_dict()
    entries.update(optimizer.state_dict())
    if model.tsc_targets is not None:
        entries["tsc_targets"] = model.tsc_targets
    save_checkpoint(ckpt, entries)
    dump_json_file(checkpoint_meta_path(ckpt), {
        "mode": model.mode.value,
        "profile": profile.name,
        "step": step,
        "epoch": epoch,
        "config": run_config_to_dict(cfg),
    })
    debug(f"checkpoint {ckpt} at step {step}")


def load_run_meta(ckpt: str) -> Dict:
    path = checkpoint_meta_path(ckpt)
    if not os.path.isfile(path):
        raise DataError(f"checkpoint sidecar missing: {path}")
    return load_json_file(path, required=True)


def restore_model(ckpt: str) -> Tuple[HoilModel, RunConfig, KeypointProfile]:
    """A trained model with the config and keypoint profile it was trained with."""
    meta = load_run_meta(ckpt)
    cfg = run_config_from_dict(meta["config"])
    profile = load_profile(meta["profile"])
    entries = load_checkpoint(ckpt)
    model = build_model(cfg, Mode(meta["mode"]), profile, entries.get("tsc_targets"))
    model.load_state(entries)
    return model, cfg, profile


def _dump_nan(ckpt: str, step: int, batch: Sequence[FrameRecord], breakdown: Dict[str, float]) -> str:
    path = ckpt + ".nan.json"
    dump_json_file(path, {
        "step": step,
        "frame_indices": [int(r.frame_index) for r in batch],
        "breakdown": {k: repr(v) for k, v in breakdown.items()},
    })
    return path


class LossLog:
    def __init__(self, path: str, terms: Sequence[str], resume_step: int = 0):
        self.path = path
        self.terms = tuple(terms)
        rows = []
        if resume_step > 0 and os.path.isfile(path):
            with open(path, "r", encoding="utf-8", newline="") as f:
                rows = [row for row in csv.reader(f)][1:]
            rows = [row for row in rows if int(row[0]) < resume_step]
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._file = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(("step", "total") + self.terms)
        self._writer.writerows(rows)

    def write(self, step: int, total: float, breakdown: Dict[str, float]):
        self._writer.writerow([step, f"{total:.17g}"] + [f"{breakdown.get(t, 0.0):.17g}" for t in self.terms])
        self._file.flush()

    def close(self):
        self._file.close()


def train(cfg: RunConfig, mode: Mode, data_dirs: Sequence[str], out: str, init_ckpt: Optional[str] = None,
          reinit_queries: bool = False, resume: bool = False, steps: Optional[int] = None) -> TrainSummary:
    mode = Mode(mode)
    cfg = cfg.with_mode(mode)
    frames = load_training_frames(cfg, data_dirs)
    target = profile_for(cfg, mode)
    model = build_model(cfg, mode, target)
    if init_ckpt is not None:
        entries = load_checkpoint(init_ckpt)
        model.load_state({k: v for k, v in entries.items() if not k.startswith("optim/")}, reinit_queries)

    batch_size = cfg.optimizer.batch_size
    steps_per_epoch = max(1, math.ceil(frames.count / batch_size))
    total_steps = steps if steps is not None else cfg.optimizer.epochs * steps_per_epoch
    optimizer = AdamW.from_config(list(model.named_parameters()), cfg.optimizer, cfg.learning_rate, total_steps)

    start = 0
    if resume and os.path.isfile(out):
        entries = load_checkpoint(out)
        model.load_state(entries)
        optimizer.load_state(entries)
        start = optimizer.step_count
        log(f"Resuming from {out} at step {start}")

    terms = PRETRAIN_TERMS if mode == Mode.PRETRAIN else FINETUNE_TERMS
    loss_log = LossLog(out + ".loss.csv", terms, start)
    losses, breakdowns = [], []
    log(f"Training ({mode.value}) for {total_steps} steps on {frames.count} frames")
    try:
        for step in range(start, total_steps):
            batch = frames.mix.batch(step, batch_size)
            optimizer.zero_grad()
            total, breakdown = batch_loss(model, batch, cfg, frames.profile, target, step)
            value = total.item()
            if not np.isfinite(value):
                dump = _dump_nan(out, step, batch, breakdown)
                raise NumericalError(f"loss is not finite at step {step} (frames {[r.frame_index for r in batch]}); "
                                     f"diagnostics in {dump}")
            backward(total)
            optimizer.step()
            loss_log.write(step, value, breakdown)
            losses.append(value)
            breakdowns.append(breakdown)
            if (step + 1) % steps_per_epoch == 0 or step + 1 == total_steps:
                save_run(out, model, optimizer, cfg, target, step + 1, (step + 1) // steps_per_epoch)
            if step % 25 == 0:
                debug(f"step {step}: loss {value:.6f}")
    finally:
        loss_log.close()
    if not losses and start >= total_steps:
        log("Nothing to do: run already complete")
    return TrainSummary(out, total_steps, losses, breakdowns)


def handle_train(mode: str, config_path: Optional[str], data_dirs: Sequence[str], out: str,
                 init_ckpt: Optional[str] = None, reinit_queries: bool = False, resume: bool = False,
                 steps: Optional[int] = None, plots: bool = False):
    cfg = load_run_config(config_path)
    if Mode(mode) == Mode.FINETUNE and init_ckpt is None:
        raise ConfigError("finetune needs --ckpt with a pretrained checkpoint")
    if steps is not None and steps < 1:
        raise ConfigError("--steps must be at least 1")
    summary = train(cfg, Mode(mode), data_dirs, out, init_ckpt, reinit_queries, resume, steps)
    if plots and summary.losses:
        start = summary.steps - len(summary.losses)
        plot_loss_curve(range(start, summary.steps), summary.losses, out + ".loss.svg")
    final = f", final loss {summary.losses[-1]:.6f}" if summary.losses else ""
    return f"Trained {summary.steps} steps{final}; checkpoint at {summary.checkpoint}", 0
