"""Convolutional-transformer skeleton encoder and its heads.

Pipeline for a (B, T, J, 2) batch::

    flatten joints -> 2 x [Conv1D -> SeLU -> BatchNorm -> MaxPool]
    -> linear projection to D_model -> prepend CLS -> add positional embedding
    -> L x post-norm transformer layer -> CLS output (B, D_model)
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class EncoderConfig:
    F: int = 192
    K: int = 3
    L: int = 6
    H: int = 3
    D_model: int = 192
    T: int = 30
    J: int = 15
    dropout: float = 0.1
    pool_size: int = 2
    pool_stride: int = 1

    def __post_init__(self):
        for name in ("F", "K", "L", "H", "D_model", "T", "J", "pool_size", "pool_stride"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"encoder.{name} must be positive, got {getattr(self, name)}")
        if self.D_model % self.H:
            raise ConfigError(f"encoder.D_model={self.D_model} not divisible by H={self.H}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"encoder.dropout must be in [0, 1), got {self.dropout}")
        try:
            self.t_prime
        except ShapeError as exc:
            raise ConfigError(f"encoder.T={self.T} too short for two pooling stages") from exc

    @property
    def d_mlp(self) -> int:
        return 4 * self.D_model

    @property
    def d_head(self) -> int:
        return self.D_model // self.H

    @property
    def in_channels(self) -> int:
        return 2 * self.J

    @property
    def t_pool1(self) -> int:
        return nn.pool_length(self.T, self.pool_size, self.pool_stride)

    @property
    def t_prime(self) -> int:
        return nn.pool_length(self.t_pool1, self.pool_size, self.pool_stride)

    @property
    def n_tokens(self) -> int:
        return self.t_prime + 1

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, shape, fan_in):
    lim = math.sqrt(3.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape)


class Module:
    """Named trainable tensors plus non-trainable numpy buffers."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def _param(self, name, value):
        self.params[name] = Tensor(value, requires_grad=True, name=name)
        return self.params[name]

    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict:
        out = {f"param/{k}": v.data for k, v in self.params.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        return out

    def load_state(self, state: dict) -> None:
        from .errors import CheckpointError
        for k, p in self.params.items():
            arr = state.get(f"param/{k}")
            if arr is None or arr.shape != p.shape:
                raise CheckpointError(f"parameter {k!r}: expected {p.shape}, "
                                      f"got {None if arr is None else arr.shape}")
            p.data = np.array(arr, dtype=p.data.dtype)
        for k, b in self.buffers.items():
            arr = state.get(f"buffer/{k}")
            if arr is None or arr.shape != b.shape:
                raise CheckpointError(f"buffer {k!r} missing or misshapen")
            self.buffers[k] = np.array(arr, dtype=b.dtype)

    def copy_from(self, other: "Module") -> None:
        for k, p in self.params.items():
            p.data = other.params[k].data.copy()
        for k in self.buffers:
            self.buffers[k] = other.buffers[k].copy()


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        c = cfg
        for i, c_in in ((1, c.in_channels), (2, c.F)):
            self._param(f"conv{i}.w", _uniform(rng, (c.K, c_in, c.F), c.K * c_in))
            self._param(f"conv{i}.b", np.zeros(c.F))
            self._param(f"bn{i}.gamma", np.ones(c.F))
            self._param(f"bn{i}.beta", np.zeros(c.F))
            self.buffers[f"bn{i}.mean"] = np.zeros(c.F, dtype=T.get_default_dtype())
            self.buffers[f"bn{i}.var"] = np.ones(c.F, dtype=T.get_default_dtype())
        self._param("proj.w", _uniform(rng, (c.F, c.D_model), c.F))
        self._param("proj.b", np.zeros(c.D_model))
        self._param("cls", rng.normal(0, 0.02, size=c.D_model))
        self._param("pos", rng.normal(0, 0.02, size=(c.n_tokens, c.D_model)))
        D = c.D_model
        for l in range(c.L):
            p = f"layer{l}."
            for m in ("q", "k", "v", "o"):
                self._param(p + f"w{m}", _uniform(rng, (D, D), D))
                self._param(p + f"b{m}", np.zeros(D))
            self._param(p + "ln1.gamma", np.ones(D))
            self._param(p + "ln1.beta", np.zeros(D))
            self._param(p + "mlp.w1", _uniform(rng, (D, c.d_mlp), D))
            self._param(p + "mlp.b1", np.zeros(c.d_mlp))
            self._param(p + "mlp.w2", _uniform(rng, (c.d_mlp, D), c.d_mlp))
            self._param(p + "mlp.b2", np.zeros(D))
            self._param(p + "ln2.gamma", np.ones(D))
            self._param(p + "ln2.beta", np.zeros(D))

    # -- stages ------------------------------------------------------------
    def conv_stage(self, x, training: bool = False, update_stats: bool = True,
                   frozen_bn=()) -> Tensor:
        """(B, T, J, 2) or (B, T, 2J) -> (B, T', F).

        Batch-norm layers named in ``frozen_bn`` (e.g. ``{"bn1"}``) always run
        on their running statistics and never update them.
        """
        c, P = self.cfg, self.params
        x = T.astensor(x)
        if x.ndim == 4:
            x = x.reshape(x.shape[0], x.shape[1], -1)
        if x.shape[1:] != (c.T, c.in_channels):
            raise ShapeError(f"encoder expects (B, {c.T}, {c.in_channels}) input, got {x.shape}")
        h = x
        for i in (1, 2):
            h = T.selu(nn.conv1d(h, P[f"conv{i}.w"], P[f"conv{i}.b"]))
            h = nn.batchnorm(h, P[f"bn{i}.gamma"], P[f"bn{i}.beta"],
                             self.buffers[f"bn{i}.mean"], self.buffers[f"bn{i}.var"],
                             training and f"bn{i}" not in frozen_bn, update_stats=update_stats)
            h = nn.maxpool1d(h, c.pool_size, c.pool_stride)
        return h

    def embed(self, h: Tensor) -> Tensor:
        """(B, T', F) -> (B, T'+1, D_model): project, prepend CLS, add positions."""
        P = self.params
        s = nn.linear(h, P["proj.w"], P["proj.b"])
        B = s.shape[0]
        cls = T.broadcast_to(T.reshape(P["cls"], (1, 1, -1)), (B, 1, self.cfg.D_model))
        return T.concat([cls, s], axis=1) + P["pos"]

    def attention(self, l: int, x: Tensor, return_weights: bool = False):
        """Multi-head self-attention of layer ``l`` (no residual/norm)."""
        c, P = self.cfg, self.params
        p = f"layer{l}."
        B, N, D = x.shape

        def heads(m):
            y = nn.linear(x, P[p + f"w{m}"], P[p + f"b{m}"])
            return T.transpose(T.reshape(y, (B, N, c.H, c.d_head)), (0, 2, 1, 3))

        q, k, v = heads("q"), heads("k"), heads("v")
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(c.d_head))
        weights = T.softmax(scores, axis=-1)                    # (B, H, N, N)
        ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (B, N, D))
        out = nn.linear(ctx, P[p + "wo"], P[p + "bo"])
        return (out, weights) if return_weights else out

    def attention_layer(self, l: int, x: Tensor, training: bool = False, rng=None) -> Tensor:
        c, P = self.cfg, self.params
        p = f"layer{l}."
        a = nn.dropout(self.attention(l, x), c.dropout, rng, training)
        x = nn.layer_norm(x + a, P[p + "ln1.gamma"], P[p + "ln1.beta"])
        h = T.gelu(nn.linear(x, P[p + "mlp.w1"], P[p + "mlp.b1"]))
        h = nn.dropout(nn.linear(h, P[p + "mlp.w2"], P[p + "mlp.b2"]), c.dropout, rng, training)
        return nn.layer_norm(x + h, P[p + "ln2.gamma"], P[p + "ln2.beta"])

    def tokens(self, x, training: bool = False, rng=None, update_stats: bool = True,
               frozen_bn=()) -> Tensor:
        h = self.embed(self.conv_stage(x, training, update_stats, frozen_bn))
        for l in range(self.cfg.L):
            h = self.attention_layer(l, h, training, rng)
        return h

    def __call__(self, x, training: bool = False, rng=None, update_stats: bool = True,
                 frozen_bn=()) -> Tensor:
        """Representation y: the CLS output, (B, D_model)."""
        return self.tokens(x, training, rng, update_stats, frozen_bn)[:, 0]

    encode = __call__


class MLPHead(Module):
    """Linear -> BatchNorm -> ReLU -> Linear (projector / predictor)."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        self._param("w1", _uniform(rng, (d_in, hidden), d_in))
        self._param("b1", np.zeros(hidden))
        self._param("bn.gamma", np.ones(hidden))
        self._param("bn.beta", np.zeros(hidden))
        self.buffers["bn.mean"] = np.zeros(hidden, dtype=T.get_default_dtype())
        self.buffers["bn.var"] = np.ones(hidden, dtype=T.get_default_dtype())
        self._param("w2", _uniform(rng, (hidden, d_out), hidden))
        self._param("b2", np.zeros(d_out))

    def __call__(self, x, training: bool = False, update_stats: bool = True) -> Tensor:
        P = self.params
        h = nn.linear(x, P["w1"], P["b1"])
        h = nn.batchnorm(h, P["bn.gamma"], P["bn.beta"], self.buffers["bn.mean"],
                         self.buffers["bn.var"], training, update_stats=update_stats)
        return nn.linear(T.relu(h), P["w2"], P["b2"])


class LinearClassifier(Module):
    def __init__(self, d_in: int, num_classes: int, rng: np.random.Generator):
        super().__init__()
        self._param("w", _uniform(rng, (d_in, num_classes), d_in))
        self._param("b", np.zeros(num_classes))

    def __call__(self, y) -> Tensor:
        return nn.linear(y, self.params["w"], self.params["b"])


# ---------------------------------------------------------------- size analytics

def count_params(cfg: EncoderConfig, num_classes: int | None = None) -> int:
    """Trainable parameters of the encoder (+ linear classifier)."""
    c, D = cfg, cfg.D_model
    conv = c.K * c.in_channels * c.F + c.F + c.K * c.F * c.F + c.F
    bn = 2 * 2 * c.F
    embed = c.F * D + D + D + c.n_tokens * D
    layer = 4 * (D * D + D) + 2 * 2 * D + (D * c.d_mlp + c.d_mlp) + (c.d_mlp * D + D)
    total = conv + bn + embed + c.L * layer
    if num_classes:
        total += D * num_classes + num_classes
    return total


def estimate_flops(cfg: EncoderConfig, num_classes: int | None = None) -> float:
    """Floating-point operations (2 x multiply-accumulates) of one forward pass
    on a single sequence. Elementwise ops (activations, norms, softmax) are
    not counted."""
    c, D, N = cfg, cfg.D_model, cfg.n_tokens
    macs = c.T * c.K * c.in_channels * c.F
    macs += c.t_pool1 * c.K * c.F * c.F
    macs += c.t_prime * c.F * D
    per_layer = N * D * 3 * D                 # Q, K, V projections
    per_layer += 2 * c.H * N * N * c.d_head   # scores and weighted values
    per_layer += N * D * D                    # output projection
    per_layer += 2 * N * D * c.d_mlp          # feed-forward
    macs += c.L * per_layer
    if num_classes:
        macs += D * num_classes
    return 2.0 * macs
