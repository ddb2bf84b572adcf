"""Fixed-width text embeddings: precomputed SPEM stores and a deterministic stub.

SPEM layout (little-endian)::

    b"SPEM" | version u8 = 1 | count u32 | dim u32 | count * dim float32

with a sidecar ``<file>.terms`` holding one UTF-8 term per line.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import AlignmentError, FormatError, MissingTermError, TruncatedError

MAGIC = b"SPEM"
VERSION = 1
DEFAULT_DIM = 768
_HEADER = struct.Struct("<4sBII")


def normalize_term(term: str) -> str:
    """Case-fold and collapse whitespace; the lookup key for every term."""
    return " ".join(term.casefold().split())


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise FormatError("cannot normalise a zero or non-finite embedding")
    return (v / norms).astype(np.float32)


class TermEmbeddingStore:
    """Immutable term -> unit vector table."""

    def __init__(self, terms, vectors):
        vectors = np.asarray(vectors)
        if vectors.ndim != 2 or len(terms) != vectors.shape[0]:
            raise AlignmentError(f"{len(terms)} terms but {vectors.shape[0] if vectors.ndim else 0} vectors")
        self.terms = [normalize_term(t) for t in terms]
        self._index = {t: i for i, t in enumerate(self.terms)}
        if len(self._index) != len(self.terms):
            raise FormatError("store terms are not unique after case-folding")
        self.vectors = _unit_rows(vectors)
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return normalize_term(term) in self._index

    def embed(self, term: str) -> np.ndarray:
        try:
            return self.vectors[self._index[normalize_term(term)]].copy()
        except KeyError:
            raise MissingTermError([term]) from None

    def embed_many(self, terms) -> np.ndarray:
        missing = [t for t in terms if t not in self]
        if missing:
            raise MissingTermError(missing)
        idx = [self._index[normalize_term(t)] for t in terms]
        return self.vectors[idx].copy().reshape(len(idx), self.dim)


def save_store(path, terms, vectors) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    path = Path(path)
    path.write_bytes(_HEADER.pack(MAGIC, VERSION, vectors.shape[0], vectors.shape[1]) + vectors.tobytes())
    Path(f"{path}.terms").write_text("".join(t + "\n" for t in terms), encoding="utf-8")


def load_store(path) -> TermEmbeddingStore:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"{path}: header truncated")
    magic, version, count, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise FormatError(f"{path}: bad magic/version {magic!r}/{version}")
    body = raw[_HEADER.size:]
    if len(body) != count * dim * 4:
        raise FormatError(f"{path}: header says {count}x{dim} floats, payload has {len(body) // 4}")
    vectors = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    terms = Path(f"{path}.terms").read_text(encoding="utf-8").splitlines()
    if len(terms) != count:
        raise AlignmentError(f"{path}: {count} vectors but {len(terms)} terms")
    return TermEmbeddingStore(terms, vectors)


def stub_embed(term: str, dim: int = DEFAULT_DIM, seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-random unit vector keyed on (seed, case-folded term)."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    digest = hashlib.blake2b(f"{seed}\x00{normalize_term(term)}".encode(), digest_size=16).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


class StubEmbedder:
    """Store-like facade over :func:`stub_embed`; knows every term."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def __contains__(self, term: str) -> bool:
        return True

    def embed(self, term: str) -> np.ndarray:
        return stub_embed(term, self.dim, self.seed)

    def embed_many(self, terms) -> np.ndarray:
        if not terms:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.embed(t) for t in terms])
