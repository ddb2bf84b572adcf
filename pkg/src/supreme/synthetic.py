"""Synthetic ECG-like corpora with known labels, for tests and demos.

Class ``k`` is present in a record exactly when a sinusoid of frequency
``freqs[k]`` is added to lead ``k mod leads``. Phases are fixed at zero by
default; ``random_phase=True`` gives a much harder variant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .entities import ExtractionResult, Vocabulary, save_vocabulary
from .signal_io import DatasetManifest, EcgRecord, ManifestEntry, save_manifest, save_record

DEFAULT_FREQS = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
DEFAULT_TERMS = (
    "sinus bradycardia",
    "atrial fibrillation",
    "left bundle branch block",
    "right bundle branch block",
    "premature atrial complex",
    "left ventricular hypertrophy",
)


@dataclass
class SinusoidTask:
    x: np.ndarray  # [n, leads, samples] float32
    y: np.ndarray  # [n, classes] float32
    freqs: tuple[float, ...]
    sampling_rate: int


def make_sinusoid_task(n: int = 200, leads: int = 4, samples: int = 400, sampling_rate: int = 100,
                       freqs=DEFAULT_FREQS, prevalence: float = 0.4, amplitude: float = 1.0,
                       noise: float = 0.3, random_phase: bool = False, seed: int = 0) -> SinusoidTask:
    rng = np.random.default_rng(seed)
    n_classes = len(freqs)
    y = (rng.random((n, n_classes)) < prevalence).astype(np.float32)
    t = np.arange(samples) / sampling_rate
    x = noise * rng.standard_normal((n, leads, samples))
    phases = rng.uniform(0, 2 * np.pi, (n, n_classes))
    if not random_phase:
        phases[:] = 0.0
    for k, f in enumerate(freqs):
        wave = amplitude * np.sin(2 * np.pi * f * t[None, :] + phases[:, k:k + 1])
        x[:, k % leads, :] += y[:, k:k + 1] * wave
    return SinusoidTask(x.astype(np.float32), y, tuple(freqs), sampling_rate)


def synthetic_extractions(y: np.ndarray, terms, record_ids, seed: int = 0) -> list[ExtractionResult]:
    """Extraction results whose certain entities are exactly the positive classes.

    Entities appear with randomised casing; every report also carries an
    uncertain entity that the filter must drop.
    """
    rng = np.random.default_rng(seed)
    out = []
    for rid, row in zip(record_ids, y):
        certain = []
        for k in np.flatnonzero(row):
            term = terms[k]
            certain.append(term.upper() if rng.random() < 0.3 else term)
        uncertain = [f"possible {terms[int(rng.integers(len(terms)))]}"]
        normal = ["sinus rhythm"] if not certain else []
        glob = normal + certain + uncertain
        out.append(ExtractionResult(rid, glob, normal, certain, uncertain))
    return out


def write_synthetic_corpus(out_dir, n: int = 200, seed: int = 0, terms=DEFAULT_TERMS, **task_kw):
    """Write records, an unlabelled manifest, extractions, a replay file and a vocabulary.

    Returns a dict of the written paths plus the ground-truth label matrix.
    """
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    task = make_sinusoid_task(n=n, seed=seed, freqs=task_kw.pop("freqs", DEFAULT_FREQS[:len(terms)]),
                              **task_kw)
    ids = [f"rec{i:05d}" for i in range(n)]
    entries = []
    for rid, signal in zip(ids, task.x):
        rel = f"records/{rid}.speg"
        save_record(EcgRecord(rid, task.sampling_rate, signal), out / rel)
        entries.append(ManifestEntry(rid, rel, ()))
    save_manifest(DatasetManifest(entries), out / "manifest.jsonl")
    extractions = synthetic_extractions(task.y, list(terms), ids, seed)
    with open(out / "extractions.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in extractions:
            fh.write(json.dumps(r.to_json()) + "\n")
    with open(out / "replay.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in extractions:
            body = {k: v for k, v in r.to_json().items() if k != "record_id"}
            fh.write(json.dumps({"record_id": r.record_id, "response": json.dumps(body)}) + "\n")
    with open(out / "reports.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in extractions:
            text = ". ".join(r.global_entities) + ". confirmed by reader"
            fh.write(json.dumps({"record_id": r.record_id, "text": text}) + "\n")
    save_vocabulary(Vocabulary(list(terms)), out / "vocab.txt")
    return {
        "root": out,
        "manifest": out / "manifest.jsonl",
        "extractions": out / "extractions.jsonl",
        "replay": out / "replay.jsonl",
        "reports": out / "reports.jsonl",
        "vocab": out / "vocab.txt",
        "labels": task.y,
    }
