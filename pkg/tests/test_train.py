import json

import numpy as np
import pytest

import supreme.train as train_mod
from supreme.embeddings import StubEmbedder
from supreme.errors import ConfigError
from supreme.model import ModelConfig, init_model
from supreme.synthetic import DEFAULT_TERMS, make_sinusoid_task
from supreme.train import (EcgDataset, ProbeConfig, TrainConfig, evaluate_zeroshot, linear_probe, pretrain,
                           select_fraction)

SMALL = ModelConfig(leads=4, samples=400, patch_len=50, vit_width=32, vit_depth=2, vit_heads=4, latent=32,
                    query_hidden=64, cfn_depth=2, cfn_heads=4, dropout=0.0, droppath=0.0, embed_dim=64,
                    init="fan_in")
TINY = ModelConfig(leads=2, samples=40, patch_len=10, vit_width=8, vit_depth=1, vit_heads=2, latent=8,
                   query_hidden=8, cfn_depth=1, cfn_heads=2, mlp_ratio=2, embed_dim=16)


def tiny_data(n=12, m=3, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, (n, m)).astype(np.float32)
    y[0], y[1] = 1, 0
    return EcgDataset(rng.standard_normal((n, 2, 40)).astype(np.float32), y), rng.standard_normal((m, 16))


@pytest.fixture(scope="module")
def trained():
    """Small model pretrained on the separable sinusoid task, 160/60/80 split."""
    task = make_sinusoid_task(n=300, seed=0)
    ds = EcgDataset(task.x, task.y)
    splits = ds.subset(range(160)), ds.subset(range(160, 220)), ds.subset(range(220, 300))
    emb = StubEmbedder(64).embed_many(list(DEFAULT_TERMS))
    model = init_model(SMALL, 0)
    result = pretrain(model, splits[0], splits[1], emb, TrainConfig(batch_size=8, max_epochs=8, patience=4))
    return model, result, splits, emb


class TestConfigValidation:
    @pytest.mark.parametrize("kw", [{"patience": 0}, {"batch_size": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw).validate()

    def test_label_vocab_mismatch(self):
        data, e = tiny_data(m=3)
        with pytest.raises(ConfigError):
            pretrain(init_model(TINY), data, data, e[:2])


class TestPretrain:
    def test_early_stopping_at_patience(self, monkeypatch):
        worsening = iter([0.9 - 0.01 * k for k in range(100)])
        monkeypatch.setattr(train_mod, "_validation_auc", lambda *a: next(worsening))
        data, e = tiny_data()
        result = pretrain(init_model(TINY), data, data, e, TrainConfig(batch_size=12, max_epochs=50, patience=10))
        assert len(result.log) == 11
        assert result.best_epoch == 1

    def test_runs_to_max_epochs_while_improving(self, monkeypatch):
        improving = iter([0.5 + 0.01 * k for k in range(100)])
        monkeypatch.setattr(train_mod, "_validation_auc", lambda *a: next(improving))
        data, e = tiny_data()
        result = pretrain(init_model(TINY), data, data, e, TrainConfig(batch_size=12, max_epochs=4, patience=1))
        assert len(result.log) == 4 and result.best_epoch == 4

    def test_one_batch_determinism(self):
        data, e = tiny_data()
        runs = []
        for _ in range(2):
            result = pretrain(init_model(TINY, 3), data, data, e, TrainConfig(batch_size=12, max_epochs=3, seed=3))
            runs.append([h["train_loss"] for h in result.log])
        assert runs[0] == runs[1]

    def test_log_file(self, tmp_path):
        data, e = tiny_data()
        result = pretrain(init_model(TINY), data, data, e, TrainConfig(batch_size=4, max_epochs=2),
                          log_path=tmp_path / "log.jsonl")
        rows = [json.loads(line) for line in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert rows == result.log
        assert all(set(r) == {"epoch", "train_loss", "val_mean_auc", "lr"} for r in rows)
        assert [r["epoch"] for r in rows] == [1, 2]

    def test_best_checkpoint_never_worse(self, trained):
        model, result, (_, val, _), emb = trained
        aucs = [h["val_mean_auc"] for h in result.log]
        assert result.best_val_auc == max(aucs)
        assert result.log[result.best_epoch - 1]["val_mean_auc"] == result.best_val_auc
        assert train_mod._validation_auc(model, val, emb) == result.best_val_auc


class TestZeroShot:
    def test_scores_in_open_unit_interval(self, trained):
        model, _, (_, _, test), emb = trained
        scores = model.predict(test.x, emb)
        assert np.all((scores > 0) & (scores < 1))

    def test_separable_task(self, trained):
        model, result, (_, _, test), emb = trained
        assert result.best_val_auc >= 0.9
        assert evaluate_zeroshot(model, test, emb, list(DEFAULT_TERMS)).mean_auc >= 0.9

    def test_fewer_prompts(self, trained):
        model, _, (_, _, test), emb = trained
        cols = [4, 0, 2]
        report = evaluate_zeroshot(model, EcgDataset(test.x, test.y[:, cols]), emb[cols],
                                   [DEFAULT_TERMS[k] for k in cols])
        assert [c.query for c in report.per_class] == [DEFAULT_TERMS[k] for k in cols]

    def test_prompt_permutation_invariance(self, trained):
        model, _, (_, _, test), emb = trained
        base = evaluate_zeroshot(model, test, emb, list(DEFAULT_TERMS)).auc_by_query()
        perm = [5, 3, 1, 0, 2, 4]
        shuffled = evaluate_zeroshot(model, EcgDataset(test.x, test.y[:, perm]), emb[perm],
                                     [DEFAULT_TERMS[k] for k in perm]).auc_by_query()
        assert shuffled == base

    def test_dim_mismatch(self, trained):
        model, _, (_, _, test), emb = trained
        with pytest.raises(ConfigError):
            evaluate_zeroshot(model, test, emb[:, :32], list(DEFAULT_TERMS))


class TestProbe:
    def test_full_fraction_separable(self, trained):
        model, _, (tr, val, test), _ = trained
        assert linear_probe(model, tr, val, test, 1.0).mean_auc >= 0.9

    def test_encoder_frozen(self, trained):
        model, _, (tr, val, test), _ = trained
        before = {n: p.data.tobytes() for n, p in model.named_parameters()}
        linear_probe(model, tr, val, test, 0.1, ProbeConfig(max_epochs=3))
        assert before == {n: p.data.tobytes() for n, p in model.named_parameters()}

    def test_fraction_selection(self):
        a = select_fraction(1000, 0.01, seed=7)
        assert len(a) == 10 and np.array_equal(a, select_fraction(1000, 0.01, seed=7))
        assert not np.array_equal(a, select_fraction(1000, 0.01, seed=8))
        assert len(select_fraction(1000, 1.0, 0)) == 1000

    @pytest.mark.parametrize("fraction", [0.0, 0.01, 1.5])
    def test_bad_fraction(self, fraction):
        with pytest.raises(ConfigError):
            select_fraction(20, fraction, 0)
