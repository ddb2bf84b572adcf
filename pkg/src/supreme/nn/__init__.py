"""Minimal differentiable tensor kernel built on numpy."""

from .functional import (
    attention,
    bce_with_logits,
    dropout,
    gelu,
    layer_norm,
    linear,
    relu,
    sigmoid,
    softmax,
    stochastic_depth,
)
from .layers import LayerNorm, Linear, Mlp, Module, MultiHeadAttention
from .optim import AdamW, AdamWState, CosineRestartSchedule, adamw_step, lr_at, warmup_lr
from .rng import RngStreams, stream
from .tensor import Parameter, Tensor, expand, no_grad, take

__all__ = [
    "AdamW", "AdamWState", "CosineRestartSchedule", "LayerNorm", "Linear", "Mlp", "Module",
    "MultiHeadAttention", "Parameter", "RngStreams", "Tensor", "adamw_step", "attention",
    "bce_with_logits", "dropout", "expand", "gelu", "layer_norm", "linear", "lr_at", "no_grad",
    "relu", "sigmoid", "softmax", "stochastic_depth", "stream", "take", "warmup_lr",
]
