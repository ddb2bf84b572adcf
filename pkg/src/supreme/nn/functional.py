"""Differentiable layers, activations and losses with hand-written backward passes."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, expit

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, add, as_tensor, matmul, mul, reshape, swapaxes

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def linear(x, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``."""
    x = as_tensor(x, weight.dtype)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g @ weight.data.T) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor(out, parents=parents, backward=backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        d = g.shape[-1]
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / d)
        gg = (g * xhat).reshape(-1, d).sum(axis=0) if gamma.requires_grad else None
        gb = g.reshape(-1, d).sum(axis=0) if beta.requires_grad else None
        return gx, gg, gb

    return Tensor(out, parents=(x, gamma, beta), backward=backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0).astype(x.dtype), parents=(x,),
                  backward=lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
    return Tensor(x.data * cdf, parents=(x,), backward=lambda g: (g * (cdf + x.data * pdf),))


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    return Tensor(s, parents=(x,), backward=lambda g: (g * s * (1.0 - s),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return Tensor(s, parents=(x,),
                  backward=lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    return mul(x, keep.astype(x.dtype) / (1.0 - p))


def stochastic_depth(branch: Tensor, p_drop: float, training: bool,
                     rng: np.random.Generator | None = None) -> Tensor:
    """Drop a residual branch per sample (leading axis) with probability ``p_drop``."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"drop rate must lie in [0, 1), got {p_drop}")
    if not training or p_drop == 0.0:
        return branch
    keep = rng.random(branch.shape[0]) >= p_drop
    scale = (keep.astype(branch.dtype) / (1.0 - p_drop)).reshape((-1,) + (1,) * (branch.ndim - 1))
    return mul(branch, scale)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy, ``softplus(z) - y*z``, in log-sum-exp form."""
    y = np.asarray(targets)
    if y.shape != logits.shape:
        raise ShapeError(f"targets {y.shape} do not match logits {logits.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("targets must be 0 or 1")
    y = y.astype(logits.dtype)
    z = logits.data
    loss = np.maximum(z, 0) - y * z + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    return Tensor(np.asarray(loss.mean(), dtype=z.dtype), parents=(logits,),
                  backward=lambda g: (g * (expit(z) - y) / n,))


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, key_bias=None):
    """Scaled dot-product attention over already-projected ``[B, N, d]`` inputs.

    ``key_bias`` is an optional constant added to the scores of each key
    (shape ``[Nk]``). Returns ``(output [B, Nq, d], weights [B, h, Nq, Nk])``.
    """
    b, nq, d = q.shape
    nk = k.shape[1]
    if d % heads:
        raise ConfigError(f"width {d} is not divisible by {heads} heads")
    dh = d // heads

    def split(t, n):
        return swapaxes(reshape(t, (b, n, heads, dh)), 1, 2)

    scores = mul(matmul(split(q, nq), swapaxes(split(k, nk), -1, -2)), 1.0 / math.sqrt(dh))
    if key_bias is not None:
        scores = add(scores, np.asarray(key_bias, dtype=scores.dtype))
    weights = softmax(scores, axis=-1)
    out = reshape(swapaxes(matmul(weights, split(v, nk)), 1, 2), (b, nq, d))
    return out, weights
