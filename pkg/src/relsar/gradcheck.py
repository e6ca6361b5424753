"""Central finite-difference checks against reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(f: Callable[[], Tensor], t: Tensor, h: float = 1e-6) -> np.ndarray:
    """d f() / d t by central differences, perturbing ``t.data`` in place."""
    g = np.zeros_like(t.data, dtype=np.float64)
    flat = t.data.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f().data)
        flat[i] = orig - h
        fm = float(f().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray, atol: float = 1e-8) -> float:
    """||a - b|| / (||a|| + ||b||).

    Zero when both norms are below ``atol``: some gradients vanish by
    structure (a bias feeding batch norm, the attention key bias) and the
    finite difference of those is pure rounding noise.
    """
    na, nb = np.linalg.norm(np.ravel(a)), np.linalg.norm(np.ravel(b))
    if na < atol and nb < atol:
        return 0.0
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / (na + nb))


def check_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor] | dict,
                    h: float = 1e-6) -> dict:
    """Relative error of analytic vs numerical gradient for every input.

    ``f`` must rebuild the graph from the current ``.data`` of ``inputs``
    on every call and be deterministic.
    """
    named = inputs if isinstance(inputs, dict) else {str(i): t for i, t in enumerate(inputs)}
    for t in named.values():
        t.requires_grad = True
        t.grad = None
    backward(f())
    errors = {}
    for name, t in named.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        errors[name] = rel_error(analytic, numerical_grad(f, t, h))
    return errors


def _leaf(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def op_suite(seed: int = 0) -> list:
    """Finite-difference checks for every differentiable op.

    Returns ``(name, worst relative error, tolerance)`` rows. Must run
    under ``default_dtype(np.float64)``.
    """
    from . import nn
    from . import tensor as T

    rng = np.random.default_rng(seed)
    rows = []

    def add(name, f, inputs, tol):
        rows.append((name, max(check_gradients(f, inputs).values()), tol))

    a, b = _leaf(rng, 4, 5), _leaf(rng, 5, 2)
    add("matmul", lambda: T.tsum(T.matmul(a, b) ** 2), [a, b], 1e-6)
    a3, b3 = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 4, 3)
    add("batched matmul", lambda: T.tsum(T.matmul(a3, b3) ** 2), [a3, b3], 1e-6)
    x = _leaf(rng, 3, 6)
    w = Tensor(rng.standard_normal((3, 6)))
    add("softmax", lambda: T.tsum(T.softmax(x, axis=-1) * w), [x], 1e-6)
    add("log_softmax", lambda: T.tsum(T.log_softmax(x, axis=0) * w), [x], 1e-6)
    add("selu", lambda: T.tsum(T.selu(x) * w), [x], 1e-6)
    add("gelu", lambda: T.tsum(T.gelu(x) * w), [x], 1e-5)
    add("relu", lambda: T.tsum(T.relu(x) * w), [x], 1e-6)
    add("l2_normalize", lambda: T.tsum(T.l2_normalize(x, axis=-1) * w), [x], 1e-6)
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    add("exp/log/sqrt/div", lambda: T.tsum(T.log(pos) * T.sqrt(pos) + T.exp(pos) / (pos + 1.0)),
        [pos], 1e-6)
    add("max/mean/getitem", lambda: T.tsum(T.tmax(x, axis=1)) + T.mean(x[:, 1:4] ** 3),
        [x], 1e-6)
    cx, cw, cb = _leaf(rng, 2, 7, 3), _leaf(rng, 3, 3, 4), _leaf(rng, 4)
    add("conv1d", lambda: T.tsum(nn.conv1d(cx, cw, cb) ** 2), [cx, cw, cb], 1e-4)
    px = _leaf(rng, 2, 9, 3)
    add("maxpool1d", lambda: T.tsum(nn.maxpool1d(px, 2, 2) ** 2), [px], 1e-6)
    add("maxpool1d stride 1", lambda: T.tsum(nn.maxpool1d(px, 2, 1) ** 2), [px], 1e-6)
    bx, g, be = _leaf(rng, 4, 5, 3), _leaf(rng, 3), _leaf(rng, 3)
    wb = Tensor(rng.standard_normal((4, 5, 3)))
    mean, var = np.zeros(3), np.ones(3)
    add("batchnorm", lambda: T.tsum(nn.batchnorm(bx, g, be, mean, var, True) * wb), [bx, g, be], 1e-6)
    lx, lg, lb = _leaf(rng, 3, 6), _leaf(rng, 6), _leaf(rng, 6)
    add("layer_norm", lambda: T.tsum(nn.layer_norm(lx, lg, lb) * w), [lx, lg, lb], 1e-6)
    logits = _leaf(rng, 5, 4)
    labels = rng.integers(0, 4, 5)
    add("cross_entropy", lambda: nn.cross_entropy(logits, labels, 0.1), [logits], 1e-6)
    return rows


def end_to_end_byol(seed: int = 0, h: float = 1e-6) -> dict:
    """Relative error for every online parameter of a shrunken encoder + BYOL loss.

    Uses a 2-sample batch, training-mode batch norm and no dropout. Must run
    under ``default_dtype(np.float64)``.
    """
    from .augment import AugmentConfig, make_views
    from .byol import ByolConfig, ByolState, symmetric_loss
    from .model import EncoderConfig

    rng = np.random.default_rng(seed)
    enc = EncoderConfig(F=8, K=3, L=1, H=2, D_model=8, T=8, J=4, dropout=0.0)
    state = ByolState(enc, ByolConfig(proj_hidden=8, proj_dim=4), rng)
    x = rng.standard_normal((2, 8, 4, 2)) * 0.5
    x_i, x_j = make_views(x, AugmentConfig(noise_std=0.05, flip_prob=0.5), rng)
    return check_gradients(lambda: symmetric_loss(state, x_i, x_j, training=True),
                           state.online_params(), h)
