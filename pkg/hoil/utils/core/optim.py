"""
AdamW with a cosine-annealed learning rate.

Optimizer moments and the step counter round-trip through checkpoints under
`optim/...` names so a resumed run continues bit for bit.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from hoil.utils.core.errors import ConfigError, NumericalError
from hoil.utils.core.tensor import Parameter

OPTIM_PREFIX = "optim/"


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adamw"
    lr_pretrain: float = 3e-4
    lr_finetune: float = 5e-4
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 10
    min_lr_ratio: float = 0.0
    schedule: str = "cosine"

    def __post_init__(self):
        if self.algorithm != "adamw":
            raise ConfigError(f"optimizer.algorithm must be 'adamw', got '{self.algorithm}'")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"optimizer.schedule must be 'cosine' or 'constant', got '{self.schedule}'")
        if not (self.lr_pretrain > 0 and self.lr_finetune > 0):
            raise ConfigError("optimizer learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("optimizer.batch_size and optimizer.epochs must be at least 1")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))


def cosine_lr(base_lr: float, step: int, total_steps: int, min_ratio: float = 0.0) -> float:
    if total_steps <= 1:
        return base_lr
    progress = min(step, total_steps - 1) / (total_steps - 1)
    floor = base_lr * min_ratio
    return floor + 0.5 * (base_lr - floor) * (1.0 + math.cos(math.pi * progress))


class AdamW:
    def __init__(self, named_params: List[Tuple[str, Parameter]], lr: float, total_steps: int,
                 weight_decay: float = 0.01, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 schedule: str = "cosine", min_lr_ratio: float = 0.0):
        self.named_params = list(named_params)
        self.base_lr = lr
        self.total_steps = max(1, total_steps)
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.schedule = schedule
        self.min_lr_ratio = min_lr_ratio
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    @classmethod
    def from_config(cls, named_params, cfg: OptimizerConfig, lr: float, total_steps: int) -> "AdamW":
        return cls(named_params, lr, total_steps, cfg.weight_decay, cfg.betas, cfg.eps, cfg.schedule, cfg.min_lr_ratio)

    def current_lr(self) -> float:
        if self.schedule == "constant":
            return self.base_lr
        return cosine_lr(self.base_lr, self.step_count, self.total_steps, self.min_lr_ratio)

    def step(self):
        lr = self.current_lr()
        t = self.step_count + 1
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, param in self.named_params:
            if param.grad is None:
                continue
            if not np.all(np.isfinite(param.grad)):
                raise NumericalError(f"non-finite gradient in parameter '{name}'")
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * param.grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * param.grad ** 2
            param.data *= 1.0 - lr * self.weight_decay
            param.data -= lr * (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2) + self.eps)
        self.step_count = t

    def zero_grad(self):
        for _, param in self.named_params:
            param.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {OPTIM_PREFIX + "step": np.array([float(self.step_count)])}
        for name, _ in self.named_params:
            state[f"{OPTIM_PREFIX}m/{name}"] = self.m[name].copy()
            state[f"{OPTIM_PREFIX}v/{name}"] = self.v[name].copy()
        return state

    def load_state(self, entries: Dict[str, np.ndarray]):
        if OPTIM_PREFIX + "step" not in entries:
            return
        self.step_count = int(entries[OPTIM_PREFIX + "step"][0])
        for name, param in self.named_params:
            for slot, store in (("m", self.m), ("v", self.v)):
                key = f"{OPTIM_PREFIX}{slot}/{name}"
                if key in entries and entries[key].shape == param.data.shape:
                    store[name] = np.array(entries[key], dtype=np.float64)
