"""``supreme`` command line: extract, normalize, split, pretrain, eval, probe.

Exit codes: 0 success, 1 configuration error, 2 LLM client failure,
3 inconsistent or missing data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, parse_override
from .embeddings import StubEmbedder, load_store
from .entities import (
    ExtractionResult,
    LabelMatrix,
    RawReport,
    extract_all,
    load_vocabulary,
    normalize_corpus,
    preprocess_reports,
)
from .errors import ClientError, ConfigError, MissingTermError, SupremeError
from .llm import HttpLlmClient, ReplayClient
from .metrics import emit_metrics
from .model import init_model
from .signal_io import DatasetManifest, ManifestEntry, load_manifest, save_manifest, split_dataset
from .train import EcgDataset, evaluate_zeroshot, linear_probe, pretrain

EXIT_OK, EXIT_CONFIG, EXIT_CLIENT, EXIT_DATA = 0, 1, 2, 3
SNAPSHOT_NAME = "config.resolved.json"

log = logging.getLogger("supreme")


def _read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def _existing(path, key: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"referenced file {p} does not exist", key)
    return p


def _out_dir(cfg: RunConfig, given) -> Path:
    out = Path(given) if given else cfg.path("paths.output_dir")
    out.mkdir(parents=True, exist_ok=True)
    cfg.snapshot(out / SNAPSHOT_NAME)
    return out


def _out_file(cfg: RunConfig, given, default_name: str) -> Path:
    path = Path(given) if given else cfg.path("paths.output_dir") / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg.snapshot(path.parent / SNAPSHOT_NAME)
    return path


def build_embedder(cfg: RunConfig):
    emb = cfg.data["embeddings"]
    if emb["kind"] == "stub":
        return StubEmbedder(emb["dim"], emb["seed"])
    store = load_store(cfg.require_file("embeddings.path"))
    if store.dim != cfg.model.embed_dim:
        raise ConfigError(f"embedding store has dim {store.dim}, model expects {cfg.model.embed_dim}",
                          "model.embed_dim")
    return store


def _query_terms(path, key: str) -> list[str]:
    return list(load_vocabulary(_existing(path, key)).terms)


def _dataset(cfg: RunConfig, manifest_path, key: str, m: int) -> EcgDataset:
    manifest = load_manifest(_existing(manifest_path, key))
    manifest.validate_labels(m)
    return EcgDataset.from_manifest(manifest, m, cfg.path("paths.data_dir"))


def _split_path(cfg: RunConfig, given, name: str) -> Path:
    return Path(given) if given else cfg.path("paths.splits_dir") / f"{name}.jsonl"


def cmd_extract(cfg: RunConfig, args) -> int:
    rows = _read_jsonl(_existing(args.reports, "reports"))
    reports = [RawReport(r["record_id"], r.get("text") or "") for r in rows]
    kept = preprocess_reports(reports)
    llm = cfg.data["llm"]
    replay = cfg.path("llm.replay_path")
    if replay is not None:
        client = ReplayClient(_existing(replay, "llm.replay_path"))
    else:
        client = HttpLlmClient(llm["endpoint"], llm["model"], max_retries=llm["max_retries"])
    results, skipped = extract_all(kept, client, llm["max_concurrency"])
    out = _out_file(cfg, args.output, "extractions.jsonl")
    _write_jsonl(out, [r.to_json() for r in results])
    print(f"extracted {len(results)} of {len(reports)} reports "
          f"({len(reports) - len(kept)} too short, {len(skipped)} unparseable)", file=sys.stderr)
    return EXIT_OK


def cmd_normalize(cfg: RunConfig, args) -> int:
    results = [ExtractionResult.from_json(r) for r in _read_jsonl(_existing(args.extractions, "extractions"))]
    vocab = load_vocabulary(cfg.require_file("paths.vocab"))
    embedder = build_embedder(cfg)
    th = cfg.data["thresholds"]
    norm = normalize_corpus(results, embedder, vocab, embedder.embed_many(vocab.terms),
                            th["theta_dup"], th["theta_map"])
    out = _out_dir(cfg, args.output)
    norm.labels.save(out / "labels.jsonl")
    clusters = [
        {"representative": c.representative, "members": [[t, f] for t, f in c.members],
         "vocab_term": None if hit is None else vocab.terms[hit[0]],
         "similarity": None if hit is None else hit[1]}
        for c, hit in zip(norm.clusters, norm.mapping)
    ]
    with open(out / "normalization.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"funnel": norm.funnel, "clusters": clusters}, fh, indent=2)
        fh.write("\n")
    print(" -> ".join(f"{k} {v}" for k, v in norm.funnel.items()), file=sys.stderr)
    return EXIT_OK


def _attach_labels(manifest: DatasetManifest, labels: LabelMatrix) -> DatasetManifest:
    by_id = dict(zip(labels.record_ids, labels.rows))
    missing = [e.record_id for e in manifest.entries if e.record_id not in by_id]
    if missing:
        raise SupremeError(f"{len(missing)} manifest records have no label row (first: {missing[0]})")
    return DatasetManifest([ManifestEntry(e.record_id, e.path, tuple(by_id[e.record_id]))
                            for e in manifest.entries])


def cmd_split(cfg: RunConfig, args) -> int:
    manifest = load_manifest(cfg.require_file("paths.manifest"))
    if args.labels:
        manifest = _attach_labels(manifest, LabelMatrix.load(_existing(args.labels, "labels")))
    parts = split_dataset(manifest, cfg.split)
    out = _out_dir(cfg, args.output or cfg.path("paths.splits_dir"))
    for name, part in zip(("train", "val", "test"), parts):
        save_manifest(part, out / f"{name}.jsonl")
    print("split sizes " + "/".join(str(len(p)) for p in parts), file=sys.stderr)
    return EXIT_OK


def cmd_pretrain(cfg: RunConfig, args) -> int:
    queries = _query_terms(args.queries or cfg.path("paths.vocab"), "paths.vocab")
    embeddings = build_embedder(cfg).embed_many(queries)
    train = _dataset(cfg, _split_path(cfg, args.train, "train"), "train", len(queries))
    val = _dataset(cfg, _split_path(cfg, args.val, "val"), "val", len(queries))
    out = _out_dir(cfg, args.output)
    model = init_model(cfg.model, cfg.data["seed"])
    result = pretrain(model, train, val, embeddings, cfg.train, log_path=out / "log.jsonl")
    save_checkpoint(model, out / "checkpoint.spck")
    print(f"best epoch {result.best_epoch}, validation mean AUC {result.best_val_auc:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    model = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    prompts = _query_terms(args.prompts, "prompts")
    embeddings = build_embedder(cfg).embed_many(prompts)
    data = _dataset(cfg, _split_path(cfg, args.data, "test"), "data", len(prompts))
    report = evaluate_zeroshot(model, data, embeddings, prompts)
    out = _out_file(cfg, args.output, "metrics.csv")
    emit_metrics(report, out)
    print(f"mean AUC {report.mean_auc:.4f} over {len(prompts)} prompts", file=sys.stderr)
    return EXIT_OK


def cmd_probe(cfg: RunConfig, args) -> int:
    model = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    classes = _query_terms(args.classes or cfg.path("paths.vocab"), "classes")
    m = len(classes)
    train = _dataset(cfg, _split_path(cfg, args.train, "train"), "train", m)
    val = _dataset(cfg, _split_path(cfg, args.val, "val"), "val", m)
    test = _dataset(cfg, _split_path(cfg, args.test, "test"), "test", m)
    report = linear_probe(model, train, val, test, args.fraction, cfg.probe, classes)
    out = _out_file(cfg, args.output, f"probe_{args.fraction:g}.csv")
    emit_metrics(report, out)
    print(f"probe ({args.fraction:g} of train) mean AUC {report.mean_auc:.4f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. train.lr=5e-4 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="supreme", parents=[common],
                                     description="ECG pre-training with text-derived cardiac queries.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="LLM entity extraction from reports")
    p.add_argument("reports", help='JSONL of {"record_id", "text"}')
    p.add_argument("-o", "--output", help="extractions JSONL (default OUTPUT_DIR/extractions.jsonl)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("normalize", parents=[common], help="filter, deduplicate and map entities")
    p.add_argument("extractions")
    p.add_argument("-o", "--output", help="directory for labels.jsonl and normalization.json")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("split", parents=[common], help="seeded train/val/test manifests")
    p.add_argument("--labels", help="label matrix JSONL to attach to the manifest")
    p.add_argument("-o", "--output", help="directory (default paths.splits_dir)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pretrain", parents=[common], help="supervised pre-training on the vocabulary")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--queries", help="query list (default paths.vocab)")
    p.add_argument("-o", "--output", help="directory for checkpoint.spck and log.jsonl")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", parents=[common], help="zero-shot evaluation with a prompt list")
    p.add_argument("checkpoint")
    p.add_argument("prompts", help="one prompt per line; manifest labels index this list")
    p.add_argument("--data", help="labelled manifest (default splits_dir/test.jsonl)")
    p.add_argument("-o", "--output", help="metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", parents=[common], help="linear probe on frozen encoder features")
    p.add_argument("checkpoint")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--classes", help="class names, one per line (default paths.vocab)")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--test")
    p.add_argument("-o", "--output", help="metrics CSV")
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.load(args.config, [parse_override(s) for s in args.set], args.seed)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error at {exc.key or '?'}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except ClientError as exc:
        print(f"LLM client error: {exc}", file=sys.stderr)
        return EXIT_CLIENT
    except MissingTermError as exc:
        print("missing embeddings for: " + ", ".join(exc.terms), file=sys.stderr)
        return EXIT_DATA
    except (SupremeError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
