"""ECG representation learning supervised by LLM-extracted cardiac entities.

The package covers report-to-label normalization, a numpy transformer
that scores ECGs against free-text cardiac queries, and the training,
zero-shot and linear-probe loops around it.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .metrics import EvalReport, auroc, emit_metrics
from .model import ModelConfig, SupremeModel, init_model
from .train import EcgDataset, ProbeConfig, TrainConfig, evaluate_zeroshot, linear_probe, pretrain

__version__ = "0.1.0"

__all__ = [
    "EcgDataset", "EvalReport", "ModelConfig", "ProbeConfig", "SupremeModel", "TrainConfig", "auroc",
    "emit_metrics", "evaluate_zeroshot", "init_model", "linear_probe", "load_checkpoint", "pretrain",
    "save_checkpoint",
]
