"""Per-class AUROC, evaluation reports and the metrics CSV."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateClassError

CSV_HEADER = ("query", "auc", "positives", "skipped")
MEAN_ROW = "mean"


def auroc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic; ties count one half."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError(f"need both classes, got {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ClassResult:
    query: str
    auc: float | None  # None when the class is degenerate
    positives: int

    @property
    def skipped(self) -> bool:
        return self.auc is None


@dataclass
class EvalReport:
    per_class: list[ClassResult] = field(default_factory=list)

    @property
    def mean_auc(self) -> float:
        aucs = [c.auc for c in self.per_class if c.auc is not None]
        return float(np.mean(aucs)) if aucs else math.nan

    def auc_by_query(self) -> dict[str, float | None]:
        return {c.query: c.auc for c in self.per_class}


def evaluate_scores(scores, labels, queries) -> EvalReport:
    """Per-column AUROC of a ``[B, M]`` score matrix; degenerate columns are skipped."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.shape[1] != len(queries):
        raise ValueError(f"scores {scores.shape}, labels {labels.shape}, {len(queries)} queries")
    report = EvalReport()
    for k, query in enumerate(queries):
        positives = int((labels[:, k] == 1).sum())
        try:
            value = auroc(scores[:, k], labels[:, k])
        except DegenerateClassError:
            value = None
        report.per_class.append(ClassResult(query, value, positives))
    return report


def emit_metrics(report: EvalReport, path) -> None:
    """Write ``query,auc,positives,skipped`` rows in query order plus a final mean row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in report.per_class:
            w.writerow([c.query, "" if c.skipped else repr(c.auc), c.positives,
                        "true" if c.skipped else "false"])
        mean = report.mean_auc
        w.writerow([MEAN_ROW, "" if math.isnan(mean) else repr(mean),
                    sum(c.positives for c in report.per_class), "false"])


def read_metrics(path) -> EvalReport:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return EvalReport([
        ClassResult(r["query"], None if r["skipped"] == "true" else float(r["auc"]), int(r["positives"]))
        for r in rows[:-1]
    ])
