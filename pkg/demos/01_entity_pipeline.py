"""
From free-text reports to a label matrix
========================================

Two cardiologist-style reports go through extraction (replayed, so no
LLM endpoint is needed), uncertainty filtering, deduplication and
vocabulary mapping. A larger synthetic corpus then shows the count funnel.
"""

# %%
# Extraction from recorded responses. ``ReplayClient`` serves stored
# completions keyed by record id, which keeps this run offline and exact.
from pathlib import Path

from supreme.embeddings import StubEmbedder
from supreme.entities import RawReport, Vocabulary, extract_entities, filter_uncertain, normalize_corpus
from supreme.llm import ReplayClient
from supreme.synthetic import DEFAULT_TERMS, make_sinusoid_task, synthetic_extractions

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
client = ReplayClient(FIXTURES / "worked_replay.jsonl")

reports = [
    RawReport("pacs-example", "sinus rhythm with pacs. hypertrophy and/or ischemia. inferior/lateral st-t changes."),
    RawReport("infarct-example", "inferior infarct - age undetermined. pacemaker rhythm - no further analysis. "
                            "poor r wave progression - probable normal variant."),
]
results = [extract_entities(r, client) for r in reports]
for r in results:
    print(r.record_id)
    print("  normal   ", r.normal)
    print("  abnormal ", r.abnormal)
    print("  uncertain", r.uncertain)
    print("  kept     ", filter_uncertain(r))

# %%
# Normalization on a synthetic corpus. Every synthetic report mentions its
# positive classes (in mixed case) plus one hedged finding that the filter
# drops. Stub embeddings hash each case-folded term to a fixed unit vector,
# so only exact term matches clear the mapping threshold.
task = make_sinusoid_task(n=50, seed=0)
ids = [f"rec{i:03d}" for i in range(50)]
corpus = synthetic_extractions(task.y, list(DEFAULT_TERMS), ids)
vocab = Vocabulary(list(DEFAULT_TERMS))
stub = StubEmbedder(128)
norm = normalize_corpus(corpus, stub, vocab, stub.embed_many(vocab.terms))

print("funnel:", " -> ".join(f"{k} {v}" for k, v in norm.funnel.items()))
print("label matrix matches ground truth:", (norm.labels.dense() == task.y).all())
