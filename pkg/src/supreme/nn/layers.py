"""Parameter containers: a minimal ``Module`` plus the standard building blocks."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import functional as F
from .tensor import Parameter, Tensor

INIT_STD = 0.02


class Module:
    """Walks its attributes to find parameters, sub-modules and module lists.

    Parameter names are dotted attribute paths in definition order, e.g.
    ``cfn.blocks.0.cross_attn.q.weight``.
    """

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            raise KeyError(f"parameter names differ: {sorted(set(params) ^ set(state))[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)
            p.zero_grad()

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.zero_grad()
        return self

    def reset_parameters(self, rng: np.random.Generator, std: float = INIT_STD) -> None:
        """Normal(0, std) for weights and embeddings, zeros/ones per parameter kind.

        Parameters tagged ``"fan_in"`` draw from Normal(0, 1/shape[0]) instead.
        """
        for _, p in self.named_parameters():
            if p.init == "normal":
                p.data = (rng.standard_normal(p.shape) * std).astype(p.dtype)
            elif p.init == "fan_in":
                p.data = (rng.standard_normal(p.shape) / np.sqrt(p.shape[0])).astype(p.dtype)
            elif p.init == "zeros":
                p.data = np.zeros(p.shape, dtype=p.dtype)
            elif p.init == "ones":
                p.data = np.ones(p.shape, dtype=p.dtype)
            p.zero_grad()


def _param(shape, init: str, dtype=np.float32) -> Parameter:
    fill = np.ones if init == "ones" else np.zeros
    return Parameter(fill(shape, dtype=dtype), init=init)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True):
        self.weight = _param((d_in, d_out), "normal")
        self.bias = _param((d_out,), "zeros") if bias else None

    def __call__(self, x) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gamma = _param((d,), "ones")
        self.beta = _param((d,), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention(Module):
    """Unmasked multi-head attention with learned Q/K/V/output projections."""

    def __init__(self, d: int, heads: int):
        if d % heads:
            raise ConfigError(f"width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(d, d)
        self.k = Linear(d, d)
        self.v = Linear(d, d)
        self.out = Linear(d, d)

    def __call__(self, query: Tensor, memory: Tensor | None = None, key_bias=None,
                 return_weights: bool = False):
        memory = query if memory is None else memory
        ctx, weights = F.attention(self.q(query), self.k(memory), self.v(memory),
                                   self.heads, key_bias)
        out = self.out(ctx)
        return (out, weights) if return_weights else out


class Mlp(Module):
    """Linear -> activation -> Linear."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, activation: str = "gelu"):
        self.fc1 = Linear(d_in, d_hidden)
        self.fc2 = Linear(d_hidden, d_out)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        act = F.relu if self.activation == "relu" else F.gelu
        return self.fc2(act(self.fc1(x)))
