"""Optimizers and learning-rate schedules.

Optimizers operate on ``{name: Tensor}`` parameter maps and keep their
state keyed by parameter name so it can be checkpointed.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError


def cosine_lr(step: int, initial: float, decay_steps: int, final: float = 0.0) -> float:
    """Cosine decay from ``initial`` to ``final`` over ``decay_steps``, then held."""
    if initial <= 0:
        raise ConfigError(f"learning rate must be positive, got {initial}")
    if decay_steps <= 0:
        raise ConfigError(f"decay_steps must be positive, got {decay_steps}")
    frac = min(max(step, 0), decay_steps) / decay_steps
    return final + (initial - final) * 0.5 * (1.0 + math.cos(math.pi * frac))


def warmup_step_drop_lr(step: int, total_steps: int, peak: float, dropped: float,
                        warmup_frac: float = 0.4, drop_frac: float = 0.8) -> float:
    """Linear warmup to ``peak``, hold, then drop to ``dropped`` at ``drop_frac``."""
    if peak <= 0 or dropped <= 0:
        raise ConfigError("learning rates must be positive")
    warm = int(round(warmup_frac * total_steps))
    if step >= int(round(drop_frac * total_steps)):
        return dropped
    if warm > 0 and step < warm:
        return peak * (step + 1) / warm
    return peak


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay folded into the gradient."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {weight_decay}")
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}
        self.steps = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        for name, g in grads.items():
            p = params[name]
            g = g + self.weight_decay * p.data if self.weight_decay else g
            v = self.velocity.get(name)
            v = g if v is None else self.momentum * v + g
            self.velocity[name] = v
            p.data = (p.data - lr * v).astype(p.data.dtype)
        self.steps += 1

    def state_dict(self) -> dict:
        out = {f"velocity/{k}": v for k, v in self.velocity.items()}
        out["steps"] = np.array(self.steps)
        return out

    def load_state_dict(self, state: dict) -> None:
        self.steps = int(state.get("steps", 0))
        self.velocity = {k.split("/", 1)[1]: np.array(v) for k, v in state.items()
                         if k.startswith("velocity/")}


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, betas=(0.9, 0.999), eps: float = 1e-7, weight_decay: float = 0.0):
        b1, b2 = betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {betas}")
        self.b1, self.b2 = b1, b2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.steps = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        self.steps += 1
        c1 = 1 - self.b1 ** self.steps
        c2 = 1 - self.b2 ** self.steps
        for name, g in grads.items():
            p = params[name]
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.b1 * m + (1 - self.b1) * g
            v = self.b2 * v + (1 - self.b2) * g * g
            self.m[name], self.v[name] = m, v
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def state_dict(self) -> dict:
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        out["steps"] = np.array(self.steps)
        return out

    def load_state_dict(self, state: dict) -> None:
        self.steps = int(state.get("steps", 0))
        self.m = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("m/")}
        self.v = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("v/")}
