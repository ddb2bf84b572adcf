"""From free-text reports to a standardized vocabulary and a binary label matrix.

Stages: report filtering, LLM extraction with strict JSON parsing,
uncertainty filtering, embedding-based deduplication (transitive
closure of the cosine >= threshold graph), mapping clusters onto a
reference vocabulary, and building sparse label rows.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .embeddings import normalize_term
from .errors import (
    EmptyVocabularyError,
    ExtractionError,
    FormatError,
    NormalizationError,
    SchemaError,
)
from .prompts import EXTRACTION_SYSTEM_MESSAGE, build_user_prompt

log = logging.getLogger(__name__)

THETA_DUP = 0.8
THETA_MAP = 0.75
THETA_OVERLAP = 0.95
MIN_REPORT_WORDS = 3
ROLES = ("normal", "abnormal", "uncertain")
UNIT_TOL = 1e-6


@dataclass(frozen=True)
class RawReport:
    record_id: str
    text: str


def preprocess_reports(raw: list[RawReport]) -> list[RawReport]:
    """Drop empty reports and those with fewer than three whitespace tokens."""
    return [r for r in raw if len(r.text.split()) >= MIN_REPORT_WORDS]


@dataclass
class ExtractionResult:
    record_id: str
    global_entities: list[str]
    normal: list[str] = field(default_factory=list)
    abnormal: list[str] = field(default_factory=list)
    uncertain: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "global": self.global_entities,
            "classification": {role: getattr(self, role) for role in ROLES},
        }

    @classmethod
    def from_json(cls, obj: dict) -> ExtractionResult:
        body = _validate_body({"global": obj.get("global"), "classification": obj.get("classification")})
        body.record_id = obj["record_id"]
        return body


_FENCE = re.compile(r"^```[a-zA-Z]*\s*\n?(.*?)\n?\s*```$", re.DOTALL)


def _string_list(value, path: str) -> list[str]:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected an array, got {type(value).__name__}")
    out: list[str] = []
    for i, item in enumerate(value):
        if not isinstance(item, str):
            raise SchemaError(f"{path}[{i}]", f"expected a string, got {type(item).__name__}")
        term = normalize_term(item)
        if not term:
            raise SchemaError(f"{path}[{i}]", "empty entity")
        if term not in out:
            out.append(term)
    return out


def _validate_body(obj) -> ExtractionResult:
    if not isinstance(obj, dict):
        raise SchemaError("$", "top level must be an object")
    extra = set(obj) - {"global", "classification"}
    if extra:
        raise SchemaError(sorted(extra)[0], "unexpected top-level key")
    for key in ("global", "classification"):
        if key not in obj or obj[key] is None:
            raise SchemaError(key, "missing key")
    glob = _string_list(obj["global"], "global")
    cls = obj["classification"]
    if not isinstance(cls, dict):
        raise SchemaError("classification", "expected an object")
    extra = set(cls) - set(ROLES)
    if extra:
        raise SchemaError(f"classification.{sorted(extra)[0]}", "unexpected key")
    roles = {}
    seen: dict[str, str] = {}
    gset = set(glob)
    for role in ROLES:
        path = f"classification.{role}"
        if role not in cls:
            raise SchemaError(path, "missing key")
        roles[role] = _string_list(cls[role], path)
        for i, term in enumerate(roles[role]):
            if term not in gset:
                raise SchemaError(f"{path}[{i}]", f"{term!r} is not listed in global")
            if term in seen:
                raise SchemaError(f"{path}[{i}]", f"{term!r} already classified as {seen[term]}")
            seen[term] = role
    return ExtractionResult("", glob, **roles)


def parse_extraction(text: str) -> ExtractionResult:
    """Strictly parse an extraction response; code fences and whitespace are tolerated.

    The returned result has an empty ``record_id``. Schema violations raise
    :class:`SchemaError` whose ``path`` points at the offending element.
    """
    stripped = text.strip()
    m = _FENCE.match(stripped)
    if m:
        stripped = m.group(1).strip()
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON ({exc.msg})") from None
    return _validate_body(obj)


def extraction_messages(report: RawReport) -> list[dict]:
    return [
        {"role": "system", "content": EXTRACTION_SYSTEM_MESSAGE},
        {"role": "user", "content": build_user_prompt(report.text)},
    ]


def extract_entities(report: RawReport, client, max_reasks: int = 1) -> ExtractionResult:
    """Run one report through the LLM; re-ask once on a schema failure.

    Transport failures surface as :class:`ClientError` from the client.
    """
    messages = extraction_messages(report)
    for attempt in range(max_reasks + 1):
        response = client.complete(messages, record_id=report.record_id)
        try:
            result = parse_extraction(response)
        except SchemaError as exc:
            log.warning("record %s: unparseable response (%s)", report.record_id, exc)
            messages = messages + [
                {"role": "assistant", "content": response},
                {"role": "user", "content": f"Your output violated the schema at {exc.path}. "
                                            "Return only the JSON object."},
            ]
            continue
        result.record_id = report.record_id
        return result
    raise ExtractionError(f"record {report.record_id}: no valid extraction after {max_reasks + 1} attempts")


def extract_all(reports: list[RawReport], client, max_concurrency: int = 4):
    """Extract every report with bounded concurrency; results keep input order.

    Returns ``(results, skipped_ids)``. Reports that fail parsing are
    skipped; a :class:`ClientError` aborts the whole run.
    """

    def one(report):
        try:
            return extract_entities(report, client)
        except ExtractionError as exc:
            log.warning("%s; skipping", exc)
            return None

    with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
        outcomes = list(pool.map(one, reports))
    results = [r for r in outcomes if r is not None]
    skipped = [rep.record_id for rep, r in zip(reports, outcomes) if r is None]
    return results, skipped


def filter_uncertain(result: ExtractionResult) -> list[str]:
    """Certain entities (normal then abnormal), first occurrence order."""
    drop = set(result.uncertain)
    out: list[str] = []
    for term in result.normal + result.abnormal:
        if term not in drop and term not in out:
            out.append(term)
    return out


def _check_unit(vectors: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2:
        raise NormalizationError(f"{what}: expected a 2-D array")
    if v.shape[0] and np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > UNIT_TOL:
        raise NormalizationError(f"{what}: vectors are not unit-norm")
    return v


@dataclass
class EntityCluster:
    representative: str
    members: list[tuple[str, int]]
    member_vectors: np.ndarray


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def cosine_components(vectors: np.ndarray, theta: float) -> list[list[int]]:
    """Connected components of the graph with an edge wherever cosine >= theta."""
    v = np.asarray(vectors, dtype=np.float64)
    n = v.shape[0]
    ds = _DisjointSet(n)
    sim = v @ v.T
    for i, j in zip(*np.nonzero(np.triu(sim >= theta, k=1))):
        ds.union(int(i), int(j))
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(ds.find(i), []).append(i)
    return list(groups.values())


def dedup_entities(entities, vectors, theta_dup: float = THETA_DUP) -> list[EntityCluster]:
    """Merge entities into clusters of transitively similar embeddings.

    ``entities`` is a list of ``(term, corpus_frequency)`` aligned with the
    unit ``vectors``. The representative is the most frequent member
    (lexicographically smallest on ties); clusters come back sorted by
    representative.
    """
    if not 0.0 < theta_dup <= 1.0:
        raise ValueError(f"theta_dup must lie in (0, 1], got {theta_dup}")
    v = _check_unit(vectors, "entity vectors")
    if v.shape[0] != len(entities):
        raise ValueError(f"{len(entities)} entities but {v.shape[0]} vectors")
    clusters = []
    for comp in cosine_components(v, theta_dup):
        members = [(entities[i][0], entities[i][1]) for i in comp]
        rep = min(members, key=lambda m: (-m[1], m[0]))[0]
        clusters.append(EntityCluster(rep, members, np.asarray(vectors)[comp]))
    clusters.sort(key=lambda c: c.representative)
    return clusters


@dataclass
class Vocabulary:
    terms: list[str]
    scp_codes: list[str] | None = None

    def __post_init__(self):
        if not self.terms:
            raise EmptyVocabularyError("vocabulary is empty")
        folded = [normalize_term(t) for t in self.terms]
        if len(set(folded)) != len(folded):
            raise FormatError("vocabulary terms are not unique after case-folding")
        if self.scp_codes is not None and len(self.scp_codes) != len(self.terms):
            raise FormatError("scp_codes must align with terms")

    def __len__(self):
        return len(self.terms)


def load_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        terms = [line.strip() for line in fh if line.strip()]
    return Vocabulary(terms)


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(t + "\n" for t in vocab.terms)


def map_to_vocabulary(cluster: EntityCluster, vocab: Vocabulary, vocab_vectors,
                      theta_map: float = THETA_MAP) -> tuple[int, float] | None:
    """Vocabulary index with the highest mean member similarity, if above ``theta_map``."""
    if vocab is None or len(vocab.terms) == 0:
        raise EmptyVocabularyError("cannot map onto an empty vocabulary")
    if not 0.0 < theta_map <= 1.0:
        raise ValueError(f"theta_map must lie in (0, 1], got {theta_map}")
    vv = _check_unit(vocab_vectors, "vocabulary vectors")
    mv = _check_unit(cluster.member_vectors, "cluster vectors")
    mean_sim = (mv @ vv.T).mean(axis=0)
    best = int(np.argmax(mean_sim))
    if mean_sim[best] > theta_map:
        return best, float(mean_sim[best])
    return None


@dataclass
class LabelMatrix:
    record_ids: list[str]
    m: int
    rows: list[list[int]]

    @property
    def n_samples(self) -> int:
        return len(self.rows)

    def dense(self) -> np.ndarray:
        y = np.zeros((self.n_samples, self.m), dtype=np.float32)
        for i, row in enumerate(self.rows):
            y[i, row] = 1.0
        return y

    def positives(self) -> int:
        return sum(len(r) for r in self.rows)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({"n": self.n_samples, "m": self.m}) + "\n")
            for rid, row in zip(self.record_ids, self.rows):
                fh.write(json.dumps({"record_id": rid, "positives": row}) + "\n")

    @classmethod
    def load(cls, path) -> LabelMatrix:
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or set(lines[0]) != {"n", "m"}:
            raise FormatError(f"{path}: missing {{n, m}} header line")
        header, body = lines[0], lines[1:]
        if len(body) != header["n"]:
            raise FormatError(f"{path}: header says {header['n']} rows, found {len(body)}")
        return build_label_matrix([r["positives"] for r in body], header["m"],
                                  [r["record_id"] for r in body])


def build_label_matrix(mapped, vocab, record_ids=None) -> LabelMatrix:
    """Sorted, de-duplicated positive indices per record; ``vocab`` may be an int M."""
    m = vocab if isinstance(vocab, int) else len(vocab)
    rows = []
    for k, indices in enumerate(mapped):
        row = sorted(set(int(i) for i in indices))
        if row and (row[0] < 0 or row[-1] >= m):
            raise IndexError(f"row {k}: label index outside [0, {m})")
        if not row:
            log.info("row %d has no mapped entities", k)
        rows.append(row)
    if record_ids is None:
        record_ids = [str(k) for k in range(len(rows))]
    return LabelMatrix(list(record_ids), m, rows)


def overlap_analysis(terms_a, vectors_a, terms_b, vectors_b,
                     theta: float = THETA_OVERLAP) -> list[tuple[str, str, float]]:
    """Cross-vocabulary pairs with cosine >= theta; each b-term paired with its best a-term."""
    va = _check_unit(vectors_a, "vocabulary a")
    vb = _check_unit(vectors_b, "vocabulary b")
    if va.shape[0] == 0 or vb.shape[0] == 0:
        return []
    sim = vb @ va.T
    pairs = []
    for j in range(vb.shape[0]):
        i = int(np.argmax(sim[j]))
        if sim[j, i] >= theta:
            pairs.append((terms_a[i], terms_b[j], float(sim[j, i])))
    pairs.sort(key=lambda p: -p[2])
    return pairs


@dataclass
class NormalizationResult:
    labels: LabelMatrix
    clusters: list[EntityCluster]
    mapping: list[tuple[int, float] | None]  # aligned with clusters
    funnel: dict[str, int]


def normalize_corpus(results: list[ExtractionResult], embedder, vocab: Vocabulary,
                     vocab_vectors, theta_dup: float = THETA_DUP,
                     theta_map: float = THETA_MAP) -> NormalizationResult:
    """filter_uncertain -> dedup_entities -> map_to_vocabulary -> build_label_matrix.

    ``embedder`` needs ``embed_many(terms)``; missing terms propagate as
    :class:`~supreme.errors.MissingTermError`.
    """
    raw_unique = {t for r in results for t in r.global_entities}
    filtered = [filter_uncertain(r) for r in results]
    freq = Counter(t for terms in filtered for t in terms)
    entities = sorted(freq.items())
    if entities:
        vectors = embedder.embed_many([t for t, _ in entities])
    else:
        vectors = np.zeros((0, len(vocab_vectors[0])), dtype=np.float32)
    clusters = dedup_entities(entities, vectors, theta_dup)
    mapping = [map_to_vocabulary(c, vocab, vocab_vectors, theta_map) for c in clusters]
    term_to_label = {}
    for cluster, hit in zip(clusters, mapping):
        if hit is not None:
            for term, _ in cluster.members:
                term_to_label[term] = hit[0]
    rows = [[term_to_label[t] for t in terms if t in term_to_label] for terms in filtered]
    labels = build_label_matrix(rows, vocab, [r.record_id for r in results])
    hits = [h for h in mapping if h is not None]
    funnel = {
        "raw_unique": len(raw_unique),
        "post_filter": len(freq),
        "clusters": len(clusters),
        "mapped_clusters": len(hits),
        "mapped": len({h[0] for h in hits}),
    }
    return NormalizationResult(labels, clusters, mapping, funnel)
