"""ECG record files, dataset manifests, non-finite repair and splitting.

Record file layout (little-endian)::

    b"SPEG" | version u8 = 1 | leads u16 | samples u32 | rate u32 |
    leads * samples float32, lead-major
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSplitError, FormatError, IrreparableLeadError, TruncatedError

MAGIC = b"SPEG"
VERSION = 1
_HEADER = struct.Struct("<4sBHII")
REPAIR_NEIGHBOURS = 6


@dataclass
class EcgRecord:
    id: str
    sampling_rate: int
    data: np.ndarray  # (leads, samples) float32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise FormatError(f"record {self.id!r}: data must be a non-empty 2-D array")
        if self.sampling_rate <= 0:
            raise FormatError(f"record {self.id!r}: sampling_rate must be positive")

    @property
    def leads(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]


def save_record(record: EcgRecord, path) -> None:
    header = _HEADER.pack(MAGIC, VERSION, record.leads, record.samples, record.sampling_rate)
    payload = np.ascontiguousarray(record.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_record(path, record_id: str | None = None) -> EcgRecord:
    """Read a record file; the id defaults to the file stem."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"{path}: header is {len(raw)} bytes, expected {_HEADER.size}")
    magic, version, leads, samples, rate = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = leads * samples * 4
    body = raw[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedError(f"{path}: payload is {len(body)} bytes, expected {expected}")
    if len(body) > expected:
        raise FormatError(f"{path}: {len(body) - expected} trailing bytes")
    data = np.frombuffer(body, dtype="<f4").reshape(leads, samples).astype(np.float32)
    return EcgRecord(record_id or path.stem, rate, data)


def _repair_lead(lead: np.ndarray, lead_index: int) -> np.ndarray:
    finite = np.isfinite(lead)
    if finite.all():
        return lead
    good = np.flatnonzero(finite)
    if good.size < REPAIR_NEIGHBOURS:
        raise IrreparableLeadError(
            f"lead {lead_index} has {good.size} finite samples, need {REPAIR_NEIGHBOURS}"
        )
    out = lead.copy()
    k = REPAIR_NEIGHBOURS
    for i in np.flatnonzero(~finite):
        # the k nearest finite samples lie among k candidates on each side
        pos = np.searchsorted(good, i)
        cand = good[max(pos - k, 0):pos + k]
        dist = np.abs(cand - i)
        nearest = cand[np.lexsort((cand, dist))[:k]]
        out[i] = np.mean(lead[nearest].astype(np.float64))
    return out


def repair_nonfinite(record: EcgRecord) -> EcgRecord:
    """Replace NaN/Inf samples by the mean of the 6 nearest finite samples of the same lead.

    Neighbours are ranked by index distance with ties going to the lower
    index, so windows shift inward at the lead boundaries. Only finite
    values of the input are ever averaged; runs of bad samples do not
    cascade.
    """
    data = np.stack([_repair_lead(lead, i) for i, lead in enumerate(record.data)])
    return EcgRecord(record.id, record.sampling_rate, data)


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    path: str
    labels: tuple[int, ...] = ()


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.record_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise FormatError("manifest record_ids are not unique")
        for e in self.entries:
            if list(e.labels) != sorted(set(e.labels)):
                raise FormatError(f"{e.record_id}: labels must be sorted and unique")

    def __len__(self):
        return len(self.entries)

    def validate_labels(self, m: int) -> None:
        for e in self.entries:
            if any(not 0 <= k < m for k in e.labels):
                raise FormatError(f"{e.record_id}: label index outside [0, {m})")

    def label_matrix(self, m: int) -> np.ndarray:
        self.validate_labels(m)
        y = np.zeros((len(self.entries), m), dtype=np.float32)
        for row, e in enumerate(self.entries):
            y[row, list(e.labels)] = 1.0
        return y


def load_manifest(path) -> DatasetManifest:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            entries.append(ManifestEntry(obj["record_id"], obj["path"], tuple(obj.get("labels", ()))))
    return DatasetManifest(entries)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in manifest.entries:
            fh.write(json.dumps({"record_id": e.record_id, "path": e.path, "labels": list(e.labels)}) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(not 0.0 <= r <= 1.0 for r in self.ratios):
            raise ValueError(f"split ratios must be three fractions in [0, 1], got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) >= 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {sum(self.ratios)}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_sizes(n: int, ratios) -> tuple[int, int, int]:
    n_train = min(_round_half_up(n * ratios[0]), n)
    n_val = min(_round_half_up(n * ratios[1]), n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_dataset(manifest: DatasetManifest, spec: SplitSpec):
    """Seeded shuffle, then contiguous train/val/test slices."""
    n = len(manifest)
    if n == 0:
        raise DegenerateSplitError("cannot split an empty manifest")
    sizes = split_sizes(n, spec.ratios)
    for name, size, ratio in zip(("train", "val", "test"), sizes, spec.ratios):
        if size == 0 and ratio > 0:
            raise DegenerateSplitError(f"{name} split is empty for n={n}, ratios={spec.ratios}")
    order = np.random.default_rng(spec.seed).permutation(n)
    cuts = np.cumsum(sizes)[:-1]
    return tuple(
        DatasetManifest([manifest.entries[i] for i in part]) for part in np.split(order, cuts)
    )


def load_dataset(manifest: DatasetManifest, root=".", repair: bool = True) -> np.ndarray:
    """Stack all manifest records into a (n, leads, samples) float32 array."""
    root = Path(root)
    arrays = []
    for e in manifest.entries:
        rec = load_record(root / e.path, e.record_id)
        if repair:
            rec = repair_nonfinite(rec)
        arrays.append(rec.data)
    if not arrays:
        return np.zeros((0, 0, 0), dtype=np.float32)
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise FormatError(f"records have differing shapes: {sorted(shapes)}")
    return np.stack(arrays)
