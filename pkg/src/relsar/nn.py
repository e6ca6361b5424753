"""Neural-network ops built on :mod:`relsar.tensor`.

Sequence tensors are laid out as (batch, time, channels).
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor, astensor, linear  # noqa: F401  (re-exported)


def conv1d(x, w, bias=None) -> Tensor:
    """'Same'-padded 1-D convolution over time.

    x: (B, T, C_in), w: (K, C_in, C_out), bias: (C_out,) -> (B, T, C_out)
    """
    x, w = astensor(x), astensor(w)
    if x.ndim != 3:
        raise ShapeError(f"conv1d input must be (B, T, C), got {x.shape}")
    K, c_in, c_out = w.shape
    if x.shape[2] != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape[2]}, filter {c_in}")
    B, L, _ = x.shape
    left = (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (left, K - 1 - left), (0, 0)))
    # cols[b, t, k, c] = xp[b, t + k, c]
    cols = np.stack([xp[:, k:k + L] for k in range(K)], axis=2)
    out = np.tensordot(cols, w.data, axes=([2, 3], [0, 1]))

    def bw(g):
        gw = np.tensordot(cols, g, axes=([0, 1], [0, 1]))
        gcols = np.tensordot(g, w.data, axes=([2], [2]))
        gxp = np.zeros_like(xp)
        for k in range(K):
            gxp[:, k:k + L] += gcols[:, :, k]
        return gxp[:, left:left + L], gw

    y = T._make(out, (x, w), bw)
    return y if bias is None else y + bias


def pool_length(length: int, size: int = 2, stride: int = 2) -> int:
    if length < size:
        raise ShapeError(f"sequence length {length} shorter than pool size {size}")
    return (length - size) // stride + 1


def maxpool1d(x, size: int = 2, stride: int = 2) -> Tensor:
    """Unpadded max pooling over time: (B, T, C) -> (B, (T - size)//stride + 1, C)."""
    x = astensor(x)
    B, L, C = x.shape
    n = pool_length(L, size, stride)
    starts = np.arange(n) * stride
    idx = starts[:, None] + np.arange(size)[None, :]          # (n, size)
    windows = x.data[:, idx]                                    # (B, n, size, C)
    arg = windows.argmax(axis=2)                                # first max wins
    src = idx[np.arange(n)[None, :, None], arg]                 # (B, n, C)
    out = np.take_along_axis(windows, arg[:, :, None], axis=2)[:, :, 0]

    def bw(g):
        gx = np.zeros_like(x.data)
        b = np.arange(B)[:, None, None]
        c = np.arange(C)[None, None, :]
        np.add.at(gx, (b, src, c), g)
        return (gx,)
    return T._make(out, (x,), bw)


def batchnorm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.9, eps: float = 1e-3,
              update_stats: bool = True) -> Tensor:
    """Batch normalization over every axis but the last.

    In training mode batch statistics are used and, if ``update_stats``,
    the running buffers are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    x = astensor(x)
    axes = tuple(range(x.ndim - 1))
    if training:
        mu = T.mean(x, axis=axes, keepdims=True)
        xc = x - mu
        var = T.mean(xc * xc, axis=axes, keepdims=True)
        if update_stats:
            running_mean *= momentum
            running_mean += (1 - momentum) * mu.data.reshape(-1)
            running_var *= momentum
            running_var += (1 - momentum) * var.data.reshape(-1)
        xhat = xc / T.sqrt(var + eps)
    else:
        xhat = (x - running_mean) / np.sqrt(running_var + eps)
    return xhat * gamma + beta


def layer_norm(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    x = astensor(x)
    mu = T.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = T.mean(xc * xc, axis=-1, keepdims=True)
    return xc / T.sqrt(var + eps) * gamma + beta


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    x = astensor(x)
    if not training or rate <= 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def smooth_labels(labels: np.ndarray, num_classes: int, smoothing: float = 0.0) -> np.ndarray:
    """One-hot targets mixed with the uniform distribution."""
    onehot = np.eye(num_classes)[np.asarray(labels)]
    return onehot * (1.0 - smoothing) + smoothing / num_classes


def cross_entropy(logits, labels: np.ndarray, smoothing: float = 0.0) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under ``logits`` (B, C)."""
    logits = astensor(logits)
    target = smooth_labels(labels, logits.shape[-1], smoothing)
    logp = T.log_softmax(logits, axis=-1)
    return -T.mean(T.tsum(logp * target, axis=-1))
