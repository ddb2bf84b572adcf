"""ECG/query fusion network: 1-D ViT encoder, projection heads and the fusion decoder.

Shapes used throughout: ``B`` batch, ``L`` leads, ``T`` samples per lead,
``P`` patch length, ``N = T / P`` patches per lead, ``D`` encoder width,
``D'`` shared latent width, ``M`` number of queries.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import functional as F
from .nn.layers import LayerNorm, Mlp, Module, MultiHeadAttention, _param
from .nn.rng import RngStreams, stream
from .nn.tensor import Tensor, expand, no_grad, reshape, take


@dataclass(frozen=True)
class ModelConfig:
    leads: int = 12
    samples: int = 5000
    patch_len: int = 125
    vit_width: int = 192
    vit_depth: int = 12
    vit_heads: int = 3
    latent: int = 256
    ecg_hidden: int | None = None  # defaults to latent
    query_hidden: int = 256
    cfn_depth: int = 4
    cfn_heads: int = 8
    mlp_ratio: int = 4
    dropout: float = 0.1
    droppath: float = 0.1
    embed_dim: int = 768
    init: str = "normal"  # "normal": N(0, 0.02^2) everywhere; "fan_in": projections N(0, 1/fan_in)

    @property
    def n_patches(self) -> int:
        return self.samples // self.patch_len

    @property
    def n_tokens(self) -> int:
        return self.leads * self.n_patches

    def validate(self) -> ModelConfig:
        for key in ("leads", "samples", "patch_len", "vit_width", "vit_depth", "vit_heads",
                    "latent", "query_hidden", "cfn_depth", "cfn_heads", "mlp_ratio", "embed_dim"):
            if getattr(self, key) < 1:
                raise ConfigError("must be >= 1", key)
        if self.samples % self.patch_len:
            raise ConfigError(f"samples={self.samples} is not a multiple of patch_len={self.patch_len}",
                              "samples")
        if self.vit_width % self.vit_heads:
            raise ConfigError("vit_width must be divisible by vit_heads", "vit_heads")
        if self.latent % self.cfn_heads:
            raise ConfigError("latent must be divisible by cfn_heads", "cfn_heads")
        if self.latent < 2:
            raise ConfigError("latent must be >= 2", "latent")
        if self.init not in ("normal", "fan_in"):
            raise ConfigError("must be 'normal' or 'fan_in'", "init")
        for key in ("dropout", "droppath"):
            if not 0.0 <= getattr(self, key) < 1.0:
                raise ConfigError("must lie in [0, 1)", key)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError("unknown model option", sorted(unknown)[0])
        return cls(**d)


def _residual(branch: Tensor, p: float, p_path: float, training: bool, rngs) -> Tensor:
    if training:
        branch = F.dropout(branch, p, True, rngs.dropout)
        branch = F.stochastic_depth(branch, p_path, True, rngs.droppath)
    return branch


class EncoderBlock(Module):
    """Pre-norm block: ``z + MHA(LN(z))`` then ``z + FF(LN(z))``."""

    def __init__(self, d: int, heads: int, mlp_ratio: int):
        self.norm1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads)
        self.norm2 = LayerNorm(d)
        self.ff = Mlp(d, d * mlp_ratio, d, "gelu")

    def __call__(self, z, p, p_path, training, rngs):
        z = z + _residual(self.attn(self.norm1(z)), p, p_path, training, rngs)
        return z + _residual(self.ff(self.norm2(z)), p, p_path, training, rngs)


class VitEncoder(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        d = cfg.vit_width
        self.patch_proj = _param((cfg.patch_len, d), "normal")
        self.lead_embed = _param((cfg.leads, d), "normal")
        self.pos_embed = _param((cfg.n_patches, d), "normal")
        self.blocks = [EncoderBlock(d, cfg.vit_heads, cfg.mlp_ratio) for _ in range(cfg.vit_depth)]
        self.norm = LayerNorm(d)
        self.proj = Mlp(d, cfg.ecg_hidden or cfg.latent, cfg.latent, "relu")

    def patch_embed(self, x) -> Tensor:
        """``[B, L, T]`` signal to ``[B, L*N, D]`` tokens, lead-major then patch."""
        cfg = self.cfg
        x = np.asarray(x.data if isinstance(x, Tensor) else x)
        if x.ndim != 3 or x.shape[1:] != (cfg.leads, cfg.samples):
            raise ShapeError(f"expected [B, {cfg.leads}, {cfg.samples}] input, got {x.shape}")
        b = x.shape[0]
        patches = Tensor(x.reshape(b, cfg.leads, cfg.n_patches, cfg.patch_len).astype(self.patch_proj.dtype))
        z = F.linear(patches, self.patch_proj)
        z = z + reshape(self.lead_embed, (cfg.leads, 1, cfg.vit_width)) + self.pos_embed
        return reshape(z, (b, cfg.n_tokens, cfg.vit_width))

    def __call__(self, x, training: bool = False, rngs: RngStreams | None = None) -> Tensor:
        cfg = self.cfg
        z = self.patch_embed(x)
        depth = len(self.blocks)
        for i, block in enumerate(self.blocks):
            p_path = cfg.droppath * i / max(depth - 1, 1)
            z = block(z, cfg.dropout, p_path, training, rngs)
        z = self.norm(z)
        if training:
            z = F.dropout(z, cfg.dropout, True, rngs.dropout)
        return self.proj(z)


class QueryHead(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.mlp = Mlp(cfg.embed_dim, cfg.query_hidden, cfg.latent, "gelu")

    def __call__(self, e, training: bool = False, rngs: RngStreams | None = None) -> Tensor:
        e = np.asarray(e.data if isinstance(e, Tensor) else e)
        if e.ndim != 2 or e.shape[1] != self.cfg.embed_dim:
            raise ShapeError(f"expected [M, {self.cfg.embed_dim}] query embeddings, got {e.shape}")
        h = Tensor(e.astype(self.mlp.fc1.weight.dtype))
        if training:
            h = F.dropout(h, self.cfg.dropout, True, rngs.dropout)
        return self.mlp(h)


class DecoderBlock(Module):
    """Pre-norm decoder block: query self-attention, cross-attention to ECG memory, FF."""

    def __init__(self, d: int, heads: int, mlp_ratio: int):
        self.norm1 = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, heads)
        self.norm2 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, heads)
        self.norm3 = LayerNorm(d)
        self.ff = Mlp(d, d * mlp_ratio, d, "gelu")

    def __call__(self, h, memory, key_bias, p, training, rngs):
        h = h + _residual(self.self_attn(self.norm1(h), key_bias=key_bias), p, 0.0, training, rngs)
        h = h + _residual(self.cross_attn(self.norm2(h), memory), p, 0.0, training, rngs)
        return h + _residual(self.ff(self.norm3(h)), p, 0.0, training, rngs)


class CardiacFusionNetwork(Module):
    """Decoder over query tokens with the ECG tokens as memory; one logit per query.

    Queries carry no positional encoding and attention is unmasked, so the
    network is permutation-equivariant in the queries. To make that hold
    bit for bit, the query rows are reduced to their sorted distinct set
    before decoding; duplicates enter self-attention through a
    ``log(count)`` key bias, which is the same softmax as attending to
    every copy. Logit columns are then gathered back to input order.
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        d = cfg.latent
        self.ecg_norm = LayerNorm(d)
        self.query_norm = LayerNorm(d)
        self.blocks = [DecoderBlock(d, cfg.cfn_heads, cfg.mlp_ratio) for _ in range(cfg.cfn_depth)]
        self.norm = LayerNorm(d)
        self.head = Mlp(d, d // 2, 1, "gelu")

    def __call__(self, f_ecg: Tensor, f_query: Tensor, training: bool = False,
                 rngs: RngStreams | None = None) -> Tensor:
        d = self.cfg.latent
        if f_ecg.ndim != 3 or f_ecg.shape[-1] != d:
            raise ShapeError(f"ECG features must be [B, S, {d}], got {f_ecg.shape}")
        if f_query.ndim != 2 or f_query.shape[-1] != d or f_query.shape[0] < 1:
            raise ShapeError(f"query features must be [M, {d}], got {f_query.shape}")
        _, first, inverse, counts = np.unique(
            f_query.data, axis=0, return_index=True, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        key_bias = np.log(counts) if np.any(counts > 1) else None
        b, u = f_ecg.shape[0], len(first)
        memory = self.ecg_norm(f_ecg)
        h = expand(self.query_norm(take(f_query, first, axis=0)), (b, u, d))
        for block in self.blocks:
            h = block(h, memory, key_bias, self.cfg.dropout, training, rngs)
        logits = reshape(self.head(self.norm(h)), (b, u))
        return take(logits, inverse, axis=1)


class SupremeModel(Module):
    def __init__(self, config: ModelConfig):
        self.config = config.validate()
        self.encoder = VitEncoder(config)
        self.query_head = QueryHead(config)
        self.cfn = CardiacFusionNetwork(config)

    @property
    def dtype(self):
        return self.encoder.patch_proj.dtype

    def patch_embed(self, x) -> Tensor:
        return self.encoder.patch_embed(x)

    def encode_ecg(self, x, training: bool = False, rngs: RngStreams | None = None) -> Tensor:
        """``[B, L, T]`` -> ``F_ECG`` of shape ``[B, L*N, D']``."""
        return self.encoder(x, training, rngs)

    def project_queries(self, e, training: bool = False, rngs: RngStreams | None = None) -> Tensor:
        """``[M, embed_dim]`` -> ``F_Query`` of shape ``[M, D']``."""
        return self.query_head(e, training, rngs)

    def fuse(self, f_ecg: Tensor, f_query: Tensor, training: bool = False,
             rngs: RngStreams | None = None) -> Tensor:
        return self.cfn(f_ecg, f_query, training, rngs)

    def forward(self, x, e, training: bool = False, rngs: RngStreams | None = None) -> Tensor:
        """Logits ``[B, M]``; the query embeddings ``e`` are constants."""
        if training and rngs is None:
            raise ValueError("training mode needs rng streams")
        return self.fuse(self.encode_ecg(x, training, rngs), self.project_queries(e, training, rngs),
                         training, rngs)

    __call__ = forward

    def predict(self, x, e, batch_size: int = 64) -> np.ndarray:
        """Eval-mode sigmoid scores ``[B, M]`` as a numpy array."""
        x = np.asarray(x)
        out = []
        with no_grad():
            f_query = self.project_queries(e)
            for start in range(0, x.shape[0], batch_size):
                logits = self.fuse(self.encode_ecg(x[start:start + batch_size]), f_query)
                out.append(F.sigmoid(logits).data)
        if not out:
            return np.zeros((0, np.shape(e)[0]), dtype=self.dtype)
        return np.concatenate(out, axis=0)

    def features(self, x, batch_size: int = 64) -> np.ndarray:
        """Token-averaged eval-mode ECG features ``[B, D']``."""
        x = np.asarray(x)
        out = []
        with no_grad():
            for start in range(0, x.shape[0], batch_size):
                out.append(self.encode_ecg(x[start:start + batch_size]).data.mean(axis=1))
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.config.latent), self.dtype)


def init_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> SupremeModel:
    """Build a model with seeded weights, zero biases and unit LN gains.

    With ``config.init == "normal"`` every weight and embedding draws from
    N(0, 0.02^2). ``"fan_in"`` keeps that for the embedding tables but draws
    linear and attention weights from N(0, 1/fan_in), which trains much
    faster at small widths.
    """
    model = SupremeModel(config)
    if config.init == "fan_in":
        for name, p in model.named_parameters():
            if p.init == "normal" and not name.endswith("_embed"):
                p.init = "fan_in"
    model.reset_parameters(stream(seed, "init"))
    return model.astype(dtype)
