"""Stochastic views of skeleton sequences for BYOL.

All functions accept a (T, J, 2) sequence or a (B, T, J, 2) batch and take
an explicit ``numpy.random.Generator``. Batched calls draw per-sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class AugmentConfig:
    noise_std: float = 0.01
    scale_range: tuple = (0.9, 1.1)
    flip_prob: float = 0.5
    flip_mode: str = "temporal"     # or "spatial": mirror the y axis

    def __post_init__(self):
        self.scale_range = tuple(float(v) for v in self.scale_range)
        lo, hi = self.scale_range
        if lo > hi:
            raise ConfigError(f"augment.scale_range: lo {lo} > hi {hi}")
        if self.noise_std < 0:
            raise ConfigError(f"augment.noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= self.flip_prob <= 1:
            raise ConfigError(f"augment.flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.flip_mode not in ("temporal", "spatial"):
            raise ConfigError(f"augment.flip_mode must be temporal|spatial, got {self.flip_mode!r}")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(noise_std=0.0, scale_range=(1.0, 1.0), flip_prob=0.0)


def _lead(seq: np.ndarray) -> tuple:
    """Shape of the per-sample draw axis: () for a single sequence, (B,) for a batch."""
    return seq.shape[:-3]


def jitter(seq, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    seq = np.asarray(seq)
    if noise_std == 0:
        return seq.copy()
    return seq + rng.normal(0.0, noise_std, size=seq.shape)


def random_scale(seq, scale_range, rng: np.random.Generator, factor=None) -> np.ndarray:
    seq = np.asarray(seq)
    lo, hi = scale_range
    if factor is None:
        factor = rng.uniform(lo, hi, size=_lead(seq))
    factor = np.asarray(factor, dtype=float)
    return seq * factor.reshape(factor.shape + (1, 1, 1))


def random_flip(seq, flip_prob: float, rng: np.random.Generator, mode: str = "temporal",
                force=None) -> np.ndarray:
    """Reverse frame order (``temporal``) or negate y (``spatial``) with ``flip_prob``."""
    seq = np.asarray(seq)
    flip = rng.random(size=_lead(seq)) < flip_prob if force is None else np.asarray(force)
    flip = np.broadcast_to(flip, _lead(seq)).reshape(_lead(seq) + (1, 1, 1))
    if mode == "temporal":
        flipped = seq[..., ::-1, :, :]
    else:
        flipped = seq * np.array([1.0, -1.0])
    return np.where(flip, flipped, seq)


def augment(seq, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """One draw of jitter(scale(flip(seq)))."""
    out = random_flip(seq, cfg.flip_prob, rng, cfg.flip_mode)
    out = random_scale(out, cfg.scale_range, rng)
    return jitter(out, cfg.noise_std, rng)


def make_views(seq, cfg: AugmentConfig, rng: np.random.Generator) -> tuple:
    """Two independently augmented views of ``seq``."""
    return augment(seq, cfg, rng), augment(seq, cfg, rng)
