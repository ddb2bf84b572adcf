"""Run configuration: one JSON file plus dotted ``key=value`` overrides.

Relative paths resolve against the directory of the config file (or the
working directory when no file is given). Secrets never live here; the
LLM token is read from ``SUPREME_LLM_TOKEN``.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from pathlib import Path

from .entities import THETA_DUP, THETA_MAP, THETA_OVERLAP
from .errors import ConfigError
from .model import ModelConfig
from .signal_io import SplitSpec
from .train import ProbeConfig, TrainConfig

DEFAULTS: dict = {
    "seed": 0,
    "paths": {
        "data_dir": ".",
        "manifest": "manifest.jsonl",
        "vocab": "vocab.txt",
        "splits_dir": "splits",
        "output_dir": "out",
    },
    "split": {"ratios": [0.7, 0.1, 0.2]},
    "thresholds": {"theta_dup": THETA_DUP, "theta_map": THETA_MAP, "theta_overlap": THETA_OVERLAP},
    "llm": {"endpoint": None, "model": "llama-3.3-70b-instruct", "max_concurrency": 4,
            "replay_path": None, "max_retries": 3},
    "embeddings": {"kind": "stub", "path": None, "dim": 768, "seed": 0},
    "model": ModelConfig().to_dict(),
    # the top-level seed drives every stream, so the sections carry none
    "train": {k: v for k, v in dataclasses.asdict(TrainConfig()).items() if k != "seed"},
    "probe": {k: v for k, v in dataclasses.asdict(ProbeConfig()).items() if k != "seed"},
}

_PATH_KEYS = ("paths.data_dir", "paths.manifest", "paths.vocab", "paths.splits_dir",
              "paths.output_dir", "llm.replay_path", "embeddings.path")


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError("unknown option", path)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("expected an object", path)
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[str, object]:
    """``"train.lr=1e-3"`` to ``("train.lr", 0.001)``; non-JSON values stay strings."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {text!r} is not KEY=VALUE", key or text)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _nested(key: str, value) -> dict:
    out: dict = {}
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


class RunConfig:
    """Resolved settings for one command invocation."""

    def __init__(self, data: dict | None = None, base_dir=".", overrides=()):
        merged = _merge(DEFAULTS, data or {})
        for key, value in overrides:
            merged = _merge(merged, _nested(key, value))
        self.data = merged
        self.base_dir = Path(base_dir)
        self._typed()

    @classmethod
    def load(cls, path=None, overrides=(), seed: int | None = None) -> RunConfig:
        data, base = {}, Path(".")
        if path is not None:
            path = Path(path)
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError as exc:
                raise ConfigError(f"config file {path} not found", "--config") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON ({exc})", "--config") from exc
            base = path.parent
        overrides = list(overrides)
        if seed is not None:
            overrides.append(("seed", seed))
        return cls(data, base, overrides)

    def get(self, key: str):
        node = self.data
        for part in key.split("."):
            node = node[part]
        return node

    def path(self, key: str) -> Path | None:
        value = self.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def require_file(self, key: str) -> Path:
        p = self.path(key)
        if p is None or not p.exists():
            raise ConfigError(f"referenced file {p} does not exist", key)
        return p

    def _typed(self) -> None:
        d = self.data
        if not isinstance(d["seed"], int):
            raise ConfigError("must be an integer", "seed")
        for name, value in d["thresholds"].items():
            if not isinstance(value, (int, float)) or not 0.0 < value <= 1.0:
                raise ConfigError("must lie in (0, 1]", f"thresholds.{name}")
        for key in _PATH_KEYS:
            value = self.get(key)
            if value is not None and not isinstance(value, str):
                raise ConfigError("must be a path string", key)
        if d["embeddings"]["kind"] not in ("stub", "file"):
            raise ConfigError("must be 'stub' or 'file'", "embeddings.kind")
        if d["embeddings"]["kind"] == "file" and not d["embeddings"]["path"]:
            raise ConfigError("file embeddings need a path", "embeddings.path")
        if int(d["llm"]["max_concurrency"]) < 1:
            raise ConfigError("must be >= 1", "llm.max_concurrency")
        self.model = self._build(ModelConfig, "model")
        self.train = self._build(TrainConfig, "train", seed=d["seed"])
        self.probe = self._build(ProbeConfig, "probe", seed=d["seed"])
        try:
            self.split = SplitSpec(tuple(d["split"]["ratios"]), d["seed"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "split.ratios") from exc
        if self.model.embed_dim != d["embeddings"]["dim"] and d["embeddings"]["kind"] == "stub":
            raise ConfigError(f"stub embeddings have dim {d['embeddings']['dim']}, model expects "
                              f"{self.model.embed_dim}", "model.embed_dim")

    def _build(self, cls, section: str, **extra):
        try:
            obj = cls(**{**self.data[section], **extra})
            return obj.validate() if hasattr(obj, "validate") else obj
        except ConfigError as exc:
            raise ConfigError(exc.message, f"{section}.{exc.key}" if exc.key else section) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), section) from exc

    def snapshot(self, path) -> None:
        """Write the resolved settings (paths made absolute) as sorted JSON."""
        data = copy.deepcopy(self.data)
        for key in _PATH_KEYS:
            p = self.path(key)
            section, name = key.split(".")
            data[section][name] = None if p is None else str(p.resolve())
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
