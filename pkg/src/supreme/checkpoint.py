"""Single-file model checkpoints: JSON manifest plus a float32 blob.

Layout (little-endian)::

    b"SPCK" | version u8 = 1 | manifest_len u64 | manifest JSON (UTF-8) | blob

The manifest is ``{"config": {...}, "params": [{"name", "shape", "offset"}]}``
with ``offset`` counted in bytes from the start of the blob.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError
from .model import ModelConfig, SupremeModel

MAGIC = b"SPCK"
VERSION = 1
_HEADER = struct.Struct("<4sBQ")


def save_checkpoint(model: SupremeModel, path) -> None:
    params, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        params.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = json.dumps({"config": model.config.to_dict(), "params": params},
                          sort_keys=True).encode("utf-8")
    Path(path).write_bytes(_HEADER.pack(MAGIC, VERSION, len(manifest)) + manifest + b"".join(chunks))


def read_manifest(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, n = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise CheckpointError(f"{path}: not a checkpoint (magic {magic!r}, version {version})")
    try:
        manifest = json.loads(raw[_HEADER.size:_HEADER.size + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest") from exc
    return manifest, raw[_HEADER.size + n:]


def load_checkpoint(path, config: ModelConfig | None = None, dtype=np.float32) -> SupremeModel:
    """Rebuild the model stored at ``path``.

    When ``config`` is given it must equal the embedded one. Every
    parameter of the rebuilt model must appear in the manifest exactly
    once with a matching shape.
    """
    manifest, blob = read_manifest(path)
    try:
        stored = ModelConfig.from_dict(manifest["config"])
    except (ConfigError, TypeError, KeyError) as exc:
        raise CheckpointError(f"{path}: invalid embedded config ({exc})") from exc
    if config is not None and config != stored:
        diff = sorted(k for k, v in config.to_dict().items() if stored.to_dict()[k] != v)
        raise CheckpointError(f"{path}: config mismatch on {diff}")
    try:
        model = SupremeModel(stored)
    except ConfigError as exc:
        raise CheckpointError(f"{path}: invalid embedded config ({exc})") from exc
    entries = manifest.get("params", [])
    names = [e["name"] for e in entries]
    if len(set(names)) != len(names):
        raise CheckpointError(f"{path}: duplicate parameter names in manifest")
    by_name = {e["name"]: e for e in entries}
    expected = dict(model.named_parameters())
    if set(by_name) != set(expected):
        raise CheckpointError(f"{path}: parameter names differ from the model "
                              f"({sorted(set(by_name) ^ set(expected))[:5]})")
    for name, p in expected.items():
        e = by_name[name]
        if tuple(e["shape"]) != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {tuple(e['shape'])}, model expects {p.shape}")
        end = e["offset"] + 4 * int(np.prod(p.shape, dtype=np.int64))
        if end > len(blob):
            raise CheckpointError(f"{path}: blob truncated at {name}")
        p.data = np.frombuffer(blob[e["offset"]:end], dtype="<f4").reshape(p.shape).astype(dtype)
        p.zero_grad()
    return model
