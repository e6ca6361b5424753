"""BYOL pre-training: online/target networks, symmetric loss, EMA target."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .augment import AugmentConfig, make_views
from .checkpoint import save_checkpoint
from .errors import ConfigError, NonFiniteError, ShapeError
from .model import Encoder, EncoderConfig, MLPHead, Module
from .optim import SGD, cosine_lr
from .skeleton import ExperimentManifest, load_split
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class ByolConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-2
    decay_steps: int = 1000
    momentum: float = 0.9
    weight_decay: float = 1e-4
    tau: float = 0.99
    proj_hidden: int = 512
    proj_dim: int = 128

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"byol.lr must be positive, got {self.lr}")
        if not 0 <= self.tau <= 1:
            raise ConfigError(f"byol.tau must be in [0, 1], got {self.tau}")
        if self.batch_size < 2:
            raise ConfigError("byol.batch_size must be >= 2 (batch normalization)")
        if self.epochs < 0:
            raise ConfigError("byol.epochs must be >= 0")


# ---------------------------------------------------------------- loss

def byol_loss_term(q, z_target) -> Tensor:
    """2 - 2 cos(q, z) per sample; no gradient flows into ``z_target``."""
    q = T.astensor(q)
    z = np.asarray(z_target.data if isinstance(z_target, Tensor) else z_target)
    if q.shape != z.shape:
        raise ShapeError(f"prediction {q.shape} and target {z.shape} differ")
    qn = T.l2_normalize(q, axis=-1)
    zn = T.l2_normalize(Tensor(z), axis=-1)
    return 2.0 - 2.0 * T.tsum(qn * zn, axis=-1)


def collapse_metric(embeddings) -> float:
    """Mean per-dimension std of L2-normalized embeddings (0 means collapsed)."""
    e = np.asarray(embeddings.data if isinstance(embeddings, Tensor) else embeddings, dtype=np.float64)
    if e.ndim != 2 or len(e) < 2:
        raise ShapeError("collapse_metric needs a (batch>=2, dim) array")
    e = e / np.sqrt((e * e).sum(axis=1, keepdims=True) + 1e-12)
    return float(e.std(axis=0).mean())


# ---------------------------------------------------------------- state

class ByolState:
    """Online network (encoder, projector, predictor) and its EMA target."""

    def __init__(self, enc_cfg: EncoderConfig, cfg: ByolConfig, rng: np.random.Generator):
        self.enc_cfg, self.cfg = enc_cfg, cfg
        D = enc_cfg.D_model
        self.online = {
            "encoder": Encoder(enc_cfg, rng),
            "projector": MLPHead(D, cfg.proj_hidden, cfg.proj_dim, rng),
            "predictor": MLPHead(cfg.proj_dim, cfg.proj_hidden, cfg.proj_dim, rng),
        }
        self.target = {
            "encoder": Encoder(enc_cfg, rng),
            "projector": MLPHead(D, cfg.proj_hidden, cfg.proj_dim, rng),
        }
        for name, mod in self.target.items():
            mod.copy_from(self.online[name])
            for p in mod.params.values():
                p.requires_grad = False
        self.tau = cfg.tau
        self.optimizer = SGD(cfg.momentum, cfg.weight_decay)
        self.step = 0

    @staticmethod
    def _flat(mods: dict) -> dict:
        return {f"{m}/{k}": p for m, mod in mods.items() for k, p in mod.params.items()}

    def online_params(self) -> dict:
        return self._flat(self.online)

    def target_params(self) -> dict:
        return self._flat(self.target)

    def modules(self) -> dict:
        out = {f"online_{k}": v for k, v in self.online.items()}
        out.update({f"target_{k}": v for k, v in self.target.items()})
        return out

    def zero_grad(self) -> None:
        for mod in self.modules().values():
            mod.zero_grad()

    def forward_online(self, x, training=True, rng=None):
        y = self.online["encoder"](x, training, rng)
        z = self.online["projector"](y, training)
        return y, z, self.online["predictor"](z, training)

    def forward_target(self, x, training=True, rng=None):
        y = self.target["encoder"](x, training, rng)
        return y, self.target["projector"](y, training)


def ema_update(online: dict, target: dict, tau: float) -> None:
    """target <- tau * target + (1 - tau) * online, elementwise, in place."""
    if not 0 <= tau <= 1:
        raise ConfigError(f"tau must be in [0, 1], got {tau}")
    if online.keys() != target.keys():
        raise ShapeError("online and target parameter trees differ")
    for k, t in target.items():
        t.data = (tau * t.data + (1 - tau) * online[k].data).astype(t.data.dtype)


def symmetric_loss(state: ByolState, x_i, x_j, training: bool = True, rng=None,
                   return_terms: bool = False):
    """Batch mean of L(x_i -> online, x_j -> target) + L(x_j -> online, x_i -> target)."""
    _, _, q_i = state.forward_online(x_i, training, rng)
    _, _, q_j = state.forward_online(x_j, training, rng)
    _, z_j = state.forward_target(x_j, training, rng)
    _, z_i = state.forward_target(x_i, training, rng)
    term_a = byol_loss_term(q_i, z_j)
    term_b = byol_loss_term(q_j, z_i)
    loss = T.mean(term_a + term_b)
    return (loss, term_a.data, term_b.data) if return_terms else loss


def train_step(state: ByolState, x_i, x_j, lr: float, rng=None) -> dict:
    """One optimizer step on theta followed by the EMA update of xi."""
    state.zero_grad()
    loss, ta, tb = symmetric_loss(state, x_i, x_j, True, rng, return_terms=True)
    T.backward(loss)
    params = state.online_params()
    grads = {k: p.grad for k, p in params.items() if p.grad is not None}
    bad = not np.isfinite(loss.data) or any(not np.all(np.isfinite(g)) for g in grads.values())
    if bad:
        raise NonFiniteError(f"non-finite loss/gradient at step {state.step}")
    state.optimizer.step(params, grads, lr)
    ema_update(params_without_predictor(params), state.target_params(), state.tau)
    state.step += 1
    return {"loss": float(loss.data), "term_a": ta, "term_b": tb}


def params_without_predictor(params: dict) -> dict:
    return {k: v for k, v in params.items() if not k.startswith("predictor/")}


# ---------------------------------------------------------------- training loop

def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list:
    """Shuffled index batches; a trailing batch of one joins its predecessor."""
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        last = out.pop()
        out[-1] = np.concatenate([out[-1], last])
    return out


@dataclass
class PretrainResult:
    state: ByolState
    history: list = field(default_factory=list)    # per-epoch dicts
    steps: list = field(default_factory=list)      # per-step dicts
    checkpoint: str | None = None
    encoder_checkpoint: str | None = None
    initial_collapse_metric: float | None = None

    def epoch_losses(self) -> list:
        return [h["loss"] for h in self.history]


def checkpoint_meta(enc_cfg: EncoderConfig, cfg: ByolConfig, **extra) -> dict:
    return {"kind": "byol", "encoder": enc_cfg.to_dict(), "byol": asdict(cfg), **extra}


def pretrain(windows, enc_cfg: EncoderConfig, aug_cfg: AugmentConfig, cfg: ByolConfig,
             seed: int, out_dir=None, probe_size: int = 256) -> PretrainResult:
    """BYOL pre-training on unlabeled windows.

    ``windows`` is an (N, T, J, 2) array, a :class:`WindowSet`, or an
    :class:`ExperimentManifest` (train split is used, labels ignored).
    """
    if isinstance(windows, ExperimentManifest):
        windows = load_split(windows, "train", T=enc_cfg.T)
    x = np.asarray(getattr(windows, "x", windows))
    if len(x) < 2:
        raise ConfigError("pre-training needs at least two training windows")
    rng = np.random.default_rng(seed)
    state = ByolState(enc_cfg, cfg, rng)
    probe = x[:probe_size]
    result = PretrainResult(state)
    result.initial_collapse_metric = collapse_metric(state.online["encoder"](probe, training=False))
    out_dir = Path(out_dir) if out_dir else None
    log_fh = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train_log.jsonl", "w")
    try:
        for epoch in range(1, cfg.epochs + 1):
            losses = []
            batches = _batches(len(x), cfg.batch_size, rng)
            for bi, idx in enumerate(batches):
                lr = cosine_lr(state.step, cfg.lr, cfg.decay_steps)
                x_i, x_j = make_views(x[idx], aug_cfg, rng)
                try:
                    out = train_step(state, x_i, x_j, lr, rng)
                except NonFiniteError as exc:
                    if out_dir:
                        exc.dump_path = str(out_dir / "nonfinite_dump.npz")
                        save_checkpoint(exc.dump_path, state.modules(),
                                        checkpoint_meta(enc_cfg, cfg, step=state.step))
                    raise
                losses.append(out["loss"])
                rec = {"step": state.step, "epoch": epoch, "lr": lr, "loss": out["loss"],
                       "collapse_metric": None}
                if bi == len(batches) - 1:
                    y = state.online["encoder"](probe, training=False)
                    rec["collapse_metric"] = collapse_metric(y)
                    result.history.append({"epoch": epoch, "loss": float(np.mean(losses)),
                                           "collapse_metric": rec["collapse_metric"]})
                    log.info("epoch %d loss %.4f collapse %.4f", epoch,
                             result.history[-1]["loss"], rec["collapse_metric"])
                result.steps.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    if out_dir:
        meta = checkpoint_meta(enc_cfg, cfg, step=state.step, seed=seed)
        result.checkpoint = str(out_dir / "byol.npz")
        save_checkpoint(result.checkpoint, state.modules(), meta, state.optimizer)
        result.encoder_checkpoint = str(out_dir / "encoder.npz")
        save_checkpoint(result.encoder_checkpoint, {"encoder": state.online["encoder"]},
                        {"kind": "encoder", "encoder": enc_cfg.to_dict(), "source": "byol"})
    return result
