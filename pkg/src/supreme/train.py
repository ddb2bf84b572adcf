"""Supervised multi-label pre-training, zero-shot evaluation and linear probing."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .metrics import EvalReport, evaluate_scores
from .model import SupremeModel
from .nn import functional as F
from .nn.layers import Linear
from .nn.optim import AdamWState, CosineRestartSchedule, adamw_step, lr_at, warmup_lr
from .nn.rng import RngStreams, stream
from .nn.tensor import Tensor, no_grad
from .signal_io import DatasetManifest, load_dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-8
    T0: int = 5000
    T_mult: int = 1
    eta_min: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0

    def validate(self) -> TrainConfig:
        if self.patience < 1:
            raise ConfigError("must be >= 1", "patience")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", "batch_size")
        if self.max_epochs < 1:
            raise ConfigError("must be >= 1", "max_epochs")
        if self.lr <= 0:
            raise ConfigError("must be positive", "lr")
        return self

    @property
    def schedule(self) -> CosineRestartSchedule:
        return CosineRestartSchedule(self.lr, self.eta_min, self.T0, self.T_mult)


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-8
    warmup_steps: int = 5
    eta_min: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0


@dataclass
class EcgDataset:
    x: np.ndarray  # [n, L, T]
    y: np.ndarray  # [n, M] in {0, 1}
    record_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.x.shape[0]} signals but {self.y.shape[0]} label rows")
        if not self.record_ids:
            self.record_ids = [str(i) for i in range(len(self))]

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx) -> EcgDataset:
        idx = np.asarray(idx, dtype=np.intp)
        return EcgDataset(self.x[idx], self.y[idx], [self.record_ids[i] for i in idx])

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, m: int, root=".") -> EcgDataset:
        return cls(load_dataset(manifest, root), manifest.label_matrix(m),
                   [e.record_id for e in manifest.entries])


@dataclass
class PretrainResult:
    best_epoch: int
    best_val_auc: float
    log: list[dict]
    best_state: dict[str, np.ndarray]


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def _validation_auc(model: SupremeModel, data: EcgDataset, embeddings: np.ndarray) -> float:
    scores = model.predict(data.x, embeddings)
    return evaluate_scores(scores, data.y, [str(k) for k in range(data.y.shape[1])]).mean_auc


def _as_score(value: float) -> float:
    return -math.inf if math.isnan(value) else value


def pretrain(model: SupremeModel, train: EcgDataset, val: EcgDataset, query_embeddings,
             config: TrainConfig = TrainConfig(), log_path=None) -> PretrainResult:
    """Train on fixed query embeddings with BCE; keep the best epoch by validation mean AUC.

    Each epoch shuffles with ``seed + epoch``, steps AdamW at
    ``lr_at(global_step)``, then scores the validation split. Training
    stops after ``patience`` epochs without improvement or at
    ``max_epochs``. The model is left holding the best weights.
    """
    config.validate()
    e = np.asarray(query_embeddings)
    if train.y.shape[1] != e.shape[0] or val.y.shape[1] != e.shape[0]:
        raise ConfigError(f"label width {train.y.shape[1]} does not match {e.shape[0]} queries", "queries")
    if e.shape[1] != model.config.embed_dim:
        raise ConfigError(f"query embeddings have dim {e.shape[1]}, model expects "
                          f"{model.config.embed_dim}", "embed_dim")
    params = model.parameters()
    state = AdamWState(config.lr, weight_decay=config.weight_decay)
    rngs = RngStreams(config.seed)
    schedule = config.schedule
    history: list[dict] = []
    best_score, best_epoch, best_state, stale = -math.inf, 0, model.state_dict(), 0
    step = 0
    log_fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = stream(config.seed + epoch, "shuffle").permutation(len(train))
            total, lr_t = 0.0, lr_at(schedule, step)
            for batch in _batches(order, config.batch_size):
                lr_t = lr_at(schedule, step)
                loss = F.bce_with_logits(model(train.x[batch], e, training=True, rngs=rngs),
                                         train.y[batch])
                loss.backward()
                adamw_step(params, state, lr_t)
                total += float(loss.data) * len(batch)
                step += 1
            val_auc = _validation_auc(model, val, e)
            entry = {"epoch": epoch, "train_loss": total / len(train),
                     "val_mean_auc": None if math.isnan(val_auc) else val_auc, "lr": lr_t}
            history.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
            log.info("epoch %d loss %.5f val_auc %.4f", epoch, entry["train_loss"], val_auc)
            if best_epoch == 0 or _as_score(val_auc) > best_score:
                best_score, best_epoch, best_state, stale = _as_score(val_auc), epoch, model.state_dict(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best_state)
    return PretrainResult(best_epoch, best_score, history, best_state)


def evaluate_zeroshot(model: SupremeModel, data: EcgDataset, prompt_embeddings,
                      prompts: list[str], batch_size: int = 64) -> EvalReport:
    """Score every (record, prompt) pair with the frozen model; per-prompt AUROC."""
    e = np.asarray(prompt_embeddings)
    if e.ndim != 2 or e.shape[1] != model.config.embed_dim:
        raise ConfigError(f"prompt embeddings have shape {e.shape}, model expects dim "
                          f"{model.config.embed_dim}", "embed_dim")
    if e.shape[0] != len(prompts) or data.y.shape[1] != len(prompts):
        raise ConfigError(f"{len(prompts)} prompts, {e.shape[0]} embeddings, "
                          f"{data.y.shape[1]} label columns", "prompts")
    scores = model.predict(data.x, e, batch_size)
    return evaluate_scores(scores, data.y, prompts)


def select_fraction(n: int, fraction: float, seed: int) -> np.ndarray:
    """Sorted indices of a seeded uniform sample of ``round(fraction * n)`` items."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}", "fraction")
    k = min(int(math.floor(fraction * n + 0.5)), n)
    if k == 0:
        raise ConfigError(f"fraction {fraction} of {n} samples selects nothing", "fraction")
    return np.sort(stream(seed, "shuffle").choice(n, size=k, replace=False))


def linear_probe(model: SupremeModel, train: EcgDataset, val: EcgDataset, test: EcgDataset,
                 fraction: float = 1.0, config: ProbeConfig = ProbeConfig(),
                 class_names: list[str] | None = None) -> EvalReport:
    """Fit one linear layer on frozen, token-averaged encoder features; report test AUROC."""
    idx = select_fraction(len(train), fraction, config.seed)
    n_classes = train.y.shape[1]
    names = class_names or [f"class_{k}" for k in range(n_classes)]
    feats = {name: model.features(ds.x) for name, ds in
             (("train", train.subset(idx)), ("val", val), ("test", test))}
    y_train = train.y[idx]
    head = Linear(feats["train"].shape[1], n_classes)
    head.reset_parameters(stream(config.seed, "init"))
    params = head.parameters()
    state = AdamWState(config.lr, weight_decay=config.weight_decay)
    steps_per_epoch = math.ceil(len(idx) / config.batch_size)
    total_steps = steps_per_epoch * config.max_epochs
    schedule = CosineRestartSchedule(config.lr, config.eta_min,
                                     max(total_steps - config.warmup_steps, 1), 1)

    def val_score():
        with no_grad():
            s = F.sigmoid(head(Tensor(feats["val"]))).data
        return _as_score(evaluate_scores(s, val.y, names).mean_auc)

    best_score, best_state, stale, step = -math.inf, head.state_dict(), 0, 0
    for epoch in range(1, config.max_epochs + 1):
        order = stream(config.seed + epoch, "shuffle").permutation(len(idx))
        for batch in _batches(order, config.batch_size):
            loss = F.bce_with_logits(head(Tensor(feats["train"][batch])), y_train[batch])
            loss.backward()
            adamw_step(params, state, warmup_lr(schedule, step, config.warmup_steps))
            step += 1
        score = val_score()
        if epoch == 1 or score > best_score:
            best_score, best_state, stale = score, head.state_dict(), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    head.load_state_dict(best_state)
    with no_grad():
        scores = F.sigmoid(head(Tensor(feats["test"]))).data
    return evaluate_scores(scores, test.y, names)
