"""
The command-line workflow on a throwaway corpus
===============================================

Runs ``extract -> normalize -> split -> pretrain -> eval -> probe`` in a
temporary directory, exactly as the ``supreme`` console script would.
"""

# %%
# One JSON config drives every command. Relative paths resolve against the
# config file's directory; ``--set`` overrides single keys.
import json
import tempfile
from pathlib import Path

from supreme.cli import main
from supreme.synthetic import write_synthetic_corpus

root = Path(tempfile.mkdtemp(prefix="supreme-demo-"))
write_synthetic_corpus(root, n=120, seed=0)
config = {
    "seed": 0,
    "llm": {"replay_path": "replay.jsonl"},
    "embeddings": {"kind": "stub", "dim": 64},
    "model": {"leads": 4, "samples": 400, "patch_len": 50, "vit_width": 32, "vit_depth": 2, "vit_heads": 4,
              "latent": 32, "query_hidden": 64, "cfn_depth": 2, "cfn_heads": 4, "dropout": 0.0,
              "droppath": 0.0, "embed_dim": 64, "init": "fan_in"},
    "train": {"batch_size": 8, "max_epochs": 8, "patience": 4},
}
(root / "config.json").write_text(json.dumps(config, indent=2))
cfg = str(root / "config.json")


def supreme(*args):
    print("$ supreme", " ".join(str(a) for a in args))
    code = main([str(a) for a in args])
    assert code == 0, code


# %%
supreme("extract", root / "reports.jsonl", "--config", cfg, "-o", root / "out" / "extractions.jsonl")
supreme("normalize", root / "out" / "extractions.jsonl", "--config", cfg, "-o", root / "norm")
supreme("split", "--config", cfg, "--labels", root / "norm" / "labels.jsonl")
supreme("pretrain", "--config", cfg, "-o", root / "model")
supreme("eval", root / "model" / "checkpoint.spck", root / "vocab.txt", "--config", cfg)
supreme("probe", root / "model" / "checkpoint.spck", "--fraction", "0.5", "--config", cfg,
        "--set", "probe.max_epochs=30")

# %%
print((root / "out" / "metrics.csv").read_text())
print("outputs under", root)
