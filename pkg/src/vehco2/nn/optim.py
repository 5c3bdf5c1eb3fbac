from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Params


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    base_lr: float = 1e-3
    warmup_steps: int | None = None  # None: 5 % of the total steps
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be > 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be > 0")

    def resolve_warmup(self, total_steps: int) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, int(round(0.05 * total_steps)))


@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    step: int = 0


def adam_step(params: Params, grads: Params, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    t = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {key} has shape {g.shape}, expected {p.shape}")
        m = beta1 * state.m.get(key, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(key, 0.0) + (1.0 - beta2) * g * g
        new_params[key] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        m_new[key] = m
        v_new[key] = v
    return new_params, AdamState(m_new, v_new, t)


def cosine_warmup_lr(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warm-up to ``base_lr`` then half-cosine decay towards 0."""
    warmup = cfg.resolve_warmup(total_steps)
    if total_steps <= warmup:
        raise ConfigError(f"total_steps ({total_steps}) must exceed warmup_steps ({warmup})")
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    if step < warmup:
        return cfg.base_lr * (step + 1) / warmup
    progress = (step - warmup) / (total_steps - warmup)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
