"""Differentiable neural-network primitives built on :class:`Tensor`."""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .tensor import Tensor, as_tensor

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
    return Tensor._result(xd * cdf, "gelu", (x,), lambda g: (g * (cdf + xd * pdf),))


def softmax_array(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    p = softmax_array(x.data)

    def back(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return Tensor._result(p, "softmax", (x,), back)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (no affine; compose with mul/add)."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return Tensor._result(xhat, "layer_norm", (x,), back)


class BatchNormStats:
    """Running mean/variance for batch normalization over axis 0."""

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, stats: BatchNormStats, training: bool) -> Tensor:
    """Normalize a (batch, features) tensor; no affine.

    In training mode batch statistics are used and the running statistics are
    updated (unbiased variance, as in the usual convention). A batch of one
    row has no variance estimate, so it falls back to the running statistics.
    """
    if x.ndim != 2:
        raise ValueError(f"batch_norm expects (batch, features), got {x.shape}")
    xd = x.data
    n = xd.shape[0]
    if not training or n < 2:
        inv = 1.0 / np.sqrt(stats.running_var + stats.eps)
        out = (xd - stats.running_mean) * inv
        return Tensor._result(out, "batch_norm", (x,), lambda g: (g * inv,))

    mu = xd.mean(axis=0)
    centered = xd - mu
    var = (centered * centered).mean(axis=0)
    inv = 1.0 / np.sqrt(var + stats.eps)
    xhat = centered * inv
    m = stats.momentum
    stats.running_mean = (1 - m) * stats.running_mean + m * mu
    stats.running_var = (1 - m) * stats.running_var + m * var * (n / (n - 1))

    def back(g):
        gm = g.mean(axis=0)
        gx = (g * xhat).mean(axis=0)
        return (inv * (g - gm - xhat * gx),)

    return Tensor._result(xhat, "batch_norm", (x,), back)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = 1.0 - p
    mask = (rng.random(x.shape) < keep) / keep
    return Tensor._result(x.data * mask, "dropout", (x,), lambda g: (g * mask,))


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of (batch, K) logits against integer targets."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"logits {logits.shape} incompatible with targets {targets.shape}")
    k = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise ValueError("target class outside [0, K)")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    n = z.shape[0]
    loss = (lse - shifted[rows, targets]).mean()

    def back(g):
        p = softmax_array(z)
        p[rows, targets] -= 1.0
        return (g * p / n,)

    return Tensor._result(np.asarray(loss), "softmax_cross_entropy", (logits,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with weight stored as (out, in)."""
    out = as_tensor(x) @ weight.T
    return out + bias if bias is not None else out
