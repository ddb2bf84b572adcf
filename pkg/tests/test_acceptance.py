"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import FIXTURES, unit_pair
from supreme.checkpoint import load_checkpoint, save_checkpoint
from supreme.cli import main
from supreme.embeddings import StubEmbedder
from supreme.entities import EntityCluster, RawReport, Vocabulary, dedup_entities, extract_entities, \
    filter_uncertain, map_to_vocabulary
from supreme.llm import ReplayClient
from supreme.metrics import auroc
from supreme.model import ModelConfig, init_model
from supreme.nn import functional as F
from supreme.nn.gradcheck import check_gradients
from supreme.nn.optim import CosineRestartSchedule, lr_at
from supreme.nn.tensor import Tensor
from supreme.signal_io import DatasetManifest, EcgRecord, ManifestEntry, SplitSpec, repair_nonfinite, \
    split_dataset
from supreme.synthetic import DEFAULT_TERMS, make_sinusoid_task, write_synthetic_corpus
from supreme.train import EcgDataset, TrainConfig, evaluate_zeroshot, pretrain

OVERFIT_MODEL = ModelConfig(leads=4, samples=400, patch_len=50, vit_width=32, vit_depth=2, vit_heads=4,
                            latent=32, query_hidden=64, cfn_depth=2, cfn_heads=4, dropout=0.0, droppath=0.0,
                            embed_dim=768, init="fan_in")


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def sinusoid_splits(n=200, seed=0):
    task = make_sinusoid_task(n=n, seed=seed)
    ds = EcgDataset(task.x, task.y)
    a, b = int(0.7 * n), int(0.8 * n)
    return ds.subset(range(a)), ds.subset(range(a, b)), ds.subset(range(b, n))


def test_01_gradient_fidelity(verdict):
    cfg = ModelConfig(leads=2, samples=40, patch_len=10, vit_width=8, vit_depth=2, vit_heads=2, latent=16,
                      query_hidden=16, cfn_depth=2, cfn_heads=2, mlp_ratio=2, embed_dim=16)
    model = init_model(cfg, seed=0, dtype=np.float64)
    # O(1) weights everywhere, so no gradient hides under the absolute floor
    rng = np.random.default_rng(1)
    for p in model.parameters():
        p.data = rng.standard_normal(p.shape) * 0.5 + (1.0 if p.init == "ones" else 0.0)
    x = rng.standard_normal((2, 2, 40))
    e = rng.standard_normal((3, 16))
    y = np.array([[1, 0, 1], [0, 1, 0]])
    start = time.perf_counter()
    result = check_gradients(lambda: F.bce_with_logits(model(x, e), y), model.named_parameters(),
                             h=1e-6, rtol=1e-4, atol=1e-7)
    elapsed = time.perf_counter() - start
    total = sum(p.data.size for p in model.parameters())
    ok = result.ok and result.checked == total and elapsed < 120
    verdict(1, ok, f"{result.checked - len(result.failures)}/{total} gradient entries match, "
                   f"max abs err {result.max_abs_err:.2e}, {elapsed:.1f}s")


def test_02_query_set_flexibility(verdict, tmp_path):
    tr, va, te = sinusoid_splits()
    cfg = ModelConfig(**{**OVERFIT_MODEL.to_dict(), "embed_dim": 64})
    stub = StubEmbedder(64)
    model = init_model(cfg, 0)
    pretrain(model, tr, va, stub.embed_many(list(DEFAULT_TERMS)), TrainConfig(batch_size=16, max_epochs=1))
    save_checkpoint(model, tmp_path / "m.spck")
    loaded = load_checkpoint(tmp_path / "m.spck")
    extra = [f"extra prompt {k}" for k in range(6)]
    shapes = {}
    for m in (1, 3, 12):
        prompts = (list(DEFAULT_TERMS) + extra)[:m]
        shapes[m] = loaded.predict(te.x, stub.embed_many(prompts)).shape
    ok = all(shapes[m] == (len(te), m) for m in shapes)
    verdict(2, ok, f"trained with M=6; score shapes {shapes}")


def test_03_permutation_equivariance(verdict):
    model = init_model(ModelConfig(**{**OVERFIT_MODEL.to_dict(), "embed_dim": 64}), 0)
    rng = np.random.default_rng(0)
    for p in model.parameters():
        p.data = (p.data + rng.standard_normal(p.shape) * 0.1).astype(p.dtype)
    x = rng.standard_normal((4, 4, 400))
    f_ecg = model.encode_ecg(x)
    f_query = model.project_queries(rng.standard_normal((9, 64)))
    base = model.fuse(f_ecg, f_query).data
    exact = 0
    for _ in range(20):
        perm = rng.permutation(9)
        out = model.fuse(f_ecg, Tensor(f_query.data[perm])).data
        exact += out.tobytes() == base[:, perm].tobytes()
    verdict(3, exact == 20, f"{exact}/20 permutations bitwise equivariant")


def test_04_overfit_oracle(verdict):
    tr, va, te = sinusoid_splits()
    emb = StubEmbedder(768).embed_many(list(DEFAULT_TERMS))
    model = init_model(OVERFIT_MODEL, 0)
    start = time.perf_counter()
    result = pretrain(model, tr, va, emb, TrainConfig(batch_size=8, lr=1e-3, max_epochs=60, patience=10))
    elapsed = time.perf_counter() - start
    train_auc = evaluate_zeroshot(model, tr, emb, list(DEFAULT_TERMS)).mean_auc
    test_auc = evaluate_zeroshot(model, te, emb, list(DEFAULT_TERMS)).mean_auc
    ok = train_auc >= 0.99 and test_auc >= 0.90 and len(result.log) <= 60 and elapsed < 600
    verdict(4, ok, f"train {train_auc:.4f}, held-out {test_auc:.4f}, best epoch {result.best_epoch} "
                   f"of {len(result.log)}, {elapsed:.1f}s")


def pairwise_auroc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def test_05_auroc_oracle(verdict):
    rng = np.random.default_rng(2024)
    worst, invariant = 0.0, True
    for _ in range(500):
        n = int(rng.integers(2, 201))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(0, max(n // 4, 2), n) / 8.0  # coarse grid, many ties
        a = auroc(s, y)
        worst = max(worst, abs(a - pairwise_auroc(s, y)))
        invariant &= auroc(np.exp(s), y) == a and auroc(2.5 * s - 3.0, y) == a
    verdict(5, worst < 1e-12 and invariant, f"500 cases, max deviation {worst:.1e}, monotone invariance {invariant}")


def test_06_scheduler(verdict):
    sched = CosineRestartSchedule(1e-3, 1e-8, 5000, 1)
    errs = []
    for t in (0, 1250, 2500, 3750, 5000, 7500):
        want = 1e-8 + 0.5 * (1e-3 - 1e-8) * (1 + math.cos(math.pi * (t % 5000) / 5000))
        errs.append(abs(lr_at(sched, t) - want))
    restart = lr_at(sched, 5000) == lr_at(sched, 0)
    verdict(6, max(errs) <= 1e-12 and restart, f"max deviation {max(errs):.1e}, restart at 5000 {restart}")


def warshall_components(v, theta):
    n = len(v)
    reach = ((v @ v.T) >= theta) | np.eye(n, dtype=bool)
    for k in range(n):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    return {tuple(np.flatnonzero(reach[i])) for i in range(n)}


def test_07_dedup_oracle(verdict):
    rng = np.random.default_rng(7)
    agree = 0
    for _ in range(200):
        n, dim = int(rng.integers(1, 51)), int(rng.integers(2, 6))
        theta = float(rng.uniform(0.3, 0.95))
        v = rng.standard_normal((n, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        terms = [(f"t{i:02d}", int(rng.integers(1, 5))) for i in range(n)]
        index = {t: i for i, (t, _) in enumerate(terms)}
        got = {tuple(sorted(index[t] for t, _ in c.members)) for c in dedup_entities(terms, v, theta)}
        agree += got == warshall_components(v, theta)
    vocab = Vocabulary(["premature atrial complex"])
    boundary = {}
    for cos in (0.7499, 0.7501):
        a, b = unit_pair(cos)
        boundary[cos] = map_to_vocabulary(EntityCluster("pacs", [("pacs", 1)], a[None]), vocab, b[None], 0.75)
    ok = agree == 200 and boundary[0.7499] is None and boundary[0.7501] is not None
    verdict(7, ok, f"{agree}/200 corpora match the closure oracle; 0.7499 mapped {boundary[0.7499] is not None}, "
                   f"0.7501 mapped {boundary[0.7501] is not None}")


def test_08_pipeline_fixtures(verdict):
    reports = [json.loads(line) for line in (FIXTURES / "worked_reports.jsonl").read_text().splitlines()]
    client = ReplayClient(FIXTURES / "worked_replay.jsonl")
    got = {r["record_id"]: extract_entities(RawReport(r["record_id"], r["text"]), client) for r in reports}
    want = {
        "pacs-example": (["sinus rhythm", "pacs", "hypertrophy", "ischemia", "inferior st-t changes",
                     "lateral st-t changes"],
                    ["sinus rhythm"],
                    ["pacs", "hypertrophy", "ischemia", "inferior st-t changes", "lateral st-t changes"],
                    []),
        "infarct-example": (["inferior infarct", "age undetermined", "pacemaker rhythm", "poor r wave progression",
                        "probable normal variant"],
                       [],
                       ["inferior infarct", "pacemaker rhythm", "poor r wave progression"],
                       ["age undetermined", "probable normal variant"]),
    }
    partitions = all((r.global_entities, r.normal, r.abnormal, r.uncertain) == want[rid] for rid, r in got.items())
    filtered = all(filter_uncertain(r) == want[rid][1] + want[rid][2] for rid, r in got.items())
    verdict(8, partitions and filtered and len(got) == 2,
            f"partitions exact {partitions}, filter drops exactly the uncertain entries {filtered}")


def test_09_preprocessing(verdict):
    def repaired(values):
        return repair_nonfinite(EcgRecord("r", 500, np.array([values], dtype=np.float32))).data[0]

    centered = repaired([1, 2, 3, np.nan, 5, 6, 7])[3] == np.float32(4.0)
    boundary = repaired([np.nan, 1, 2, 3, 4, 5, 6, 7])[0] == np.float32(3.5)
    run = repaired([1, 2, 3, np.nan, np.inf, 6, 7, 8])
    run_ok = run[3] == np.float32(27 / 6) and run[4] == np.float32(27 / 6)
    manifest = DatasetManifest([ManifestEntry(f"r{i:03d}", f"r{i:03d}.speg") for i in range(100)])
    sizes = tuple(len(p) for p in split_dataset(manifest, SplitSpec((0.7, 0.1, 0.2), seed=0)))
    ok = centered and boundary and run_ok and sizes == (70, 10, 20)
    verdict(9, ok, f"repair centered {centered}, boundary {boundary}, run-of-two {run_ok}; split sizes {sizes}")


E2E_CONFIG = {
    "seed": 0,
    "embeddings": {"kind": "stub", "dim": 64},
    "model": {**OVERFIT_MODEL.to_dict(), "embed_dim": 64},
    "train": {"batch_size": 8, "max_epochs": 3, "patience": 3},
}


def test_10_determinism(verdict, tmp_path):
    csvs = []
    for name in ("run_a", "run_b"):
        root = tmp_path / name
        write_synthetic_corpus(root, n=120, seed=0)
        (root / "config.json").write_text(json.dumps(E2E_CONFIG))
        cfg = str(root / "config.json")
        codes = [
            main(["normalize", str(root / "extractions.jsonl"), "--config", cfg, "-o", str(root / "norm")]),
            main(["split", "--config", cfg, "--labels", str(root / "norm" / "labels.jsonl")]),
            main(["pretrain", "--config", cfg, "-o", str(root / "model")]),
            main(["eval", str(root / "model" / "checkpoint.spck"), str(root / "vocab.txt"), "--config", cfg,
                  "-o", str(root / "metrics.csv")]),
        ]
        assert codes == [0, 0, 0, 0]
        csvs.append((root / "metrics.csv").read_bytes())
    verdict(10, csvs[0] == csvs[1], f"metrics CSVs byte-identical {csvs[0] == csvs[1]} ({len(csvs[0])} bytes)")
