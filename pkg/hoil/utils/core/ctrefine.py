"""
Contact-conditioned temporal refinement of keypoint trajectories.

Each keypoint track is embedded with a sinusoidal frame encoding, attends to
itself over time, then cross-attends to a memory built from the track's
coordinates concatenated with its contact flags. A zero-initialized output
projection is added to the input coordinates, so an untrained model is the
identity.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from hoil.utils.core.errors import ConfigError, ContractError, NumericalError
from hoil.utils.core.layers import CrossAttentionBlock, Linear, Module, PatchAttentionBlock
from hoil.utils.core.losses import masked_mse
from hoil.utils.core.logging import debug, log
from hoil.utils.core.optim import AdamW
from hoil.utils.core.tensor import Tensor, add, backward, concat, no_grad


@dataclass(frozen=True)
class CTRefineConfig:
    hidden: int = 64
    num_heads: int = 2
    max_frames: int = 256
    steps: int = 300
    lr: float = 1e-3
    noise_sigma: float = 0.03
    oracle_contact: bool = False

    def __post_init__(self):
        if self.hidden % self.num_heads:
            raise ConfigError(f"ctrefine.hidden={self.hidden} is not divisible by num_heads={self.num_heads}")
        if self.max_frames < 1 or self.steps < 0 or not self.lr > 0:
            raise ConfigError("ctrefine.max_frames, steps and lr must be positive")


def sinusoidal_encoding(num_frames: int, dim: int) -> np.ndarray:
    positions = np.arange(num_frames, dtype=np.float64)[:, None]
    rates = 1.0 / (10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim))
    encoding = np.zeros((num_frames, dim))
    encoding[:, 0::2] = np.sin(positions * rates)
    encoding[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return encoding


class CTRefine(Module):
    def __init__(self, cfg: CTRefineConfig = CTRefineConfig(), seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng([seed, 29])
        h = cfg.hidden
        self.input_proj = self.add_module("input_proj", Linear(3, h, rng))
        self.temporal = self.add_module("temporal", PatchAttentionBlock(h, cfg.num_heads, rng, cfg.max_frames))
        self.memory_proj = self.add_module("memory_proj", Linear(4, h, rng))
        self.cross = self.add_module("cross", CrossAttentionBlock(h, cfg.num_heads, rng))
        self.output = self.add_module("output", Linear(h, 3, rng, zero=True))

    def refine_track(self, track: np.ndarray, contact: np.ndarray, encoding: np.ndarray) -> Tensor:
        centered = track - track.mean(axis=0)
        feats = add(self.input_proj(Tensor(centered)), Tensor(encoding))
        feats = self.temporal(feats)
        memory_in = np.concatenate([centered, contact[:, None].astype(np.float64)], axis=1)
        memory = add(self.memory_proj(Tensor(memory_in)), Tensor(encoding))
        feats = self.cross(feats, memory)
        return add(Tensor(track), self.output(feats))

    def forward(self, trajectory: np.ndarray, contacts: np.ndarray) -> Tensor:
        """Refined coordinates, track-major: row j * T + t holds keypoint j at frame t."""
        trajectory = np.asarray(trajectory, dtype=np.float64)
        contacts = np.asarray(contacts, dtype=bool)
        if trajectory.ndim != 3 or trajectory.shape[2] != 3:
            raise ContractError("trajectory-shape", f"expected T x N_k x 3, got {trajectory.shape}")
        if contacts.shape != trajectory.shape[:2]:
            raise ContractError("sequence-length",
                                f"contacts {contacts.shape} do not match trajectory {trajectory.shape[:2]}")
        num_frames = trajectory.shape[0]
        if num_frames > self.cfg.max_frames:
            raise ContractError("sequence-length", f"{num_frames} frames exceed max_frames={self.cfg.max_frames}")
        encoding = sinusoidal_encoding(num_frames, self.cfg.hidden)
        tracks = [self.refine_track(trajectory[:, j], contacts[:, j], encoding) for j in range(trajectory.shape[1])]
        return concat(tracks, axis=0)

    def refine(self, trajectory: np.ndarray, contacts: np.ndarray) -> np.ndarray:
        with no_grad():
            rows = self.forward(trajectory, contacts).data
        num_frames, num_keypoints = np.shape(trajectory)[:2]
        return rows.reshape(num_keypoints, num_frames, 3).transpose(1, 0, 2)


def track_major(trajectory: np.ndarray) -> np.ndarray:
    return np.asarray(trajectory).transpose(1, 0, 2).reshape(-1, 3)


@dataclass(frozen=True)
class RefineSample:
    noisy: np.ndarray
    contact: np.ndarray
    target: np.ndarray


def train_ctrefine(model: CTRefine, samples: Sequence[RefineSample], steps: Optional[int] = None,
                   lr: Optional[float] = None, seed: int = 0) -> List[float]:
    """Regresses clean trajectories from noisy ones; returns the loss per step."""
    if not samples:
        raise ContractError("no-samples", "CTRefine training needs at least one sample")
    steps = model.cfg.steps if steps is None else steps
    optimizer = AdamW(list(model.named_parameters()), lr or model.cfg.lr, steps, weight_decay=0.0)
    rng = np.random.default_rng([seed, 31])
    losses = []
    for step in range(steps):
        sample = samples[int(rng.integers(len(samples)))]
        optimizer.zero_grad()
        pred = model(sample.noisy, sample.contact)
        target = track_major(sample.target)
        loss = masked_mse(pred, target, np.ones(target.shape[0], dtype=bool))
        if not np.isfinite(loss.item()):
            raise NumericalError(f"CTRefine loss is not finite at step {step}")
        backward(loss)
        optimizer.step()
        losses.append(loss.item())
        if step % 50 == 0:
            debug(f"ctrefine step {step}: {losses[-1]:.6f}")
    if losses:
        log(f"CTRefine trained for {steps} steps, final loss {losses[-1]:.6f}")
    return losses
