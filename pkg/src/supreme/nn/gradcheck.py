"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import no_grad


@dataclass
class GradCheckResult:
    checked: int
    failures: list[tuple[str, tuple, float, float]]  # (param, index, analytic, numeric)
    max_abs_err: float

    @property
    def ok(self) -> bool:
        return not self.failures


def numerical_grad(loss_fn, param, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn() -> float`` w.r.t. every entry of ``param.data``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            grad.reshape(-1)[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(loss_fn, named_params, h: float = 1e-5, rtol: float = 1e-4,
                    atol: float = 1e-7) -> GradCheckResult:
    """Compare backprop gradients with central differences, entry by entry.

    ``loss_fn`` must rebuild the graph on every call and be deterministic.
    An entry passes when ``|a - n| <= max(rtol * max(|a|, |n|), atol)``.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in named_params}
    failures, checked, worst = [], 0, 0.0
    for name, p in named_params:
        num = numerical_grad(loss_fn, p, h)
        ana = analytic[name]
        err = np.abs(ana - num)
        bound = np.maximum(rtol * np.maximum(np.abs(ana), np.abs(num)), atol)
        checked += err.size
        worst = max(worst, float(err.max(initial=0.0)))
        for idx in zip(*np.nonzero(err > bound)):
            failures.append((name, tuple(int(i) for i in idx), float(ana[idx]), float(num[idx])))
    return GradCheckResult(checked, failures, worst)
