"""AdamW with decoupled weight decay and cosine annealing with warm restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-8
    t: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adamw_step(params, state: AdamWState, lr_t: float | None = None) -> None:
    """One in-place AdamW update of ``params`` from their ``.grad``; grads are then zeroed.

    Moments are keyed by position in ``params``, so pass the same list
    every step.
    """
    lr = state.lr if lr_t is None else lr_t
    b1, b2 = state.betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, p in enumerate(params):
        g = p.grad
        if i not in state.m:
            state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        data = p.data * (1.0 - lr * state.weight_decay)
        p.data = (data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
        p.zero_grad()


class AdamW:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-8):
        self.params = list(params)
        self.state = AdamWState(lr, tuple(betas), eps, weight_decay)

    def step(self, lr_t: float | None = None) -> None:
        adamw_step(self.params, self.state, lr_t)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass(frozen=True)
class CosineRestartSchedule:
    eta_max: float = 1e-3
    eta_min: float = 1e-8
    T0: int = 5000
    T_mult: int = 1

    def __post_init__(self):
        if self.eta_min > self.eta_max:
            raise ValueError("eta_min must not exceed eta_max")
        if self.T0 < 1 or self.T_mult < 1:
            raise ValueError("T0 and T_mult must be >= 1")


def lr_at(schedule: CosineRestartSchedule, step: int) -> float:
    """Learning rate at global ``step`` (cosine annealing with warm restarts)."""
    if step < 0:
        raise ValueError("step must be >= 0")
    T0, mult = schedule.T0, schedule.T_mult
    if mult == 1:
        t_cur, t_i = step % T0, T0
    else:
        n = int(math.log(step / T0 * (mult - 1) + 1, mult))
        start = T0 * (mult ** n - 1) // (mult - 1)
        if step < start:  # float log landed one cycle high
            n -= 1
            start = T0 * (mult ** n - 1) // (mult - 1)
        t_cur, t_i = step - start, T0 * mult ** n
    span = schedule.eta_max - schedule.eta_min
    return schedule.eta_min + 0.5 * span * (1.0 + math.cos(math.pi * t_cur / t_i))


def warmup_lr(schedule: CosineRestartSchedule, step: int, warmup_steps: int) -> float:
    """Linear ramp to ``eta_max`` over ``warmup_steps``, then the cosine schedule."""
    if step < warmup_steps:
        return schedule.eta_max * (step + 1) / warmup_steps
    return lr_at(schedule, step - warmup_steps)
