"""Command-line interface.

Subcommands: build-kg, index, query, eval, bench, serve. Exit codes: 0 on
success, 1 on runtime failure, 2 on usage or validation problems. --mock
swaps providers for the deterministic offline ones; all outputs are then
byte-reproducible (trace timings are zeroed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .config import load_config
from .construction import DEFAULT_MAX_CHARS, DEFAULT_OVERLAP, build_kg
from .errors import ConfigError, KgcqrError, ParseError, ValidationError
from .graph import TRIPLETS_FILENAME, KnowledgeGraph, load_corpus
from .metrics import DEFAULT_KS, evaluate, load_eval, write_metrics
from .pipeline import PipelineParams
from .runtime import RETRIEVERS, Runtime, kg_path, make_providers, scrub_wall_ms
from .server import serve
from .vindex import VectorIndex

REPORT_FILENAME = "report.json"
DOC_INDEX_FILENAME = "doc.idx"
TTR_INDEX_FILENAME = "ttr.idx"


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file {p} does not exist")
    return p


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def cmd_build_kg(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    providers = make_providers(cfg, args.mock)
    kg, report = build_kg(
        corpus, providers.chat, providers.templates, max_chars=args.max_chars, overlap=args.overlap
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kg.save(out / TRIPLETS_FILENAME)
    (out / REPORT_FILENAME).write_text(_dump_json(report.to_dict()), encoding="utf-8")
    print(
        f"built {report.triplets} triplets from {report.documents} documents "
        f"({report.chunks} chunks, {report.dedup_count} duplicates merged, "
        f"{report.ttr_failures} ttr fallbacks)"
    )
    if report.doc_failures:
        print(f"warning: extraction failed for {len(report.doc_failures)} documents", file=sys.stderr)
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    triplets_file = kg_path(args.kg)
    if not triplets_file.is_file():
        raise ConfigError(f"knowledge graph file {triplets_file} does not exist")
    kg = KnowledgeGraph.load(triplets_file)
    corpus = load_corpus(_require_file(args.corpus, "corpus"))
    providers = make_providers(cfg, args.mock)
    dim = cfg.provider.embedding_dim
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    doc_ix = VectorIndex(dim)
    for doc, vec in zip(corpus, providers.embed([d.text for d in corpus])):
        doc_ix.add(doc.doc_id, vec)
    doc_ix.save(out / DOC_INDEX_FILENAME)

    ttr_ix = VectorIndex(dim)
    if kg.triplets:
        for t in kg.triplets:
            if not t.ttr:
                raise ValidationError(f"triplet {t.bare()} has no ttr; rebuild the graph first")
        for t, vec in zip(kg.triplets, providers.embed([t.ttr for t in kg.triplets])):
            ttr_ix.add(t.key(), vec)
    ttr_ix.save(out / TTR_INDEX_FILENAME)

    print(f"indexed {len(doc_ix)} documents and {len(ttr_ix)} ttrs at dim {dim}")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    if not args.q.strip():
        raise ValidationError("--q must be a non-empty query")
    cfg = load_config(args.config)
    runtime = Runtime.load(cfg, args.mock)
    params = runtime.params_with(alpha=args.alpha, k_extract=args.k)
    result, ctx = runtime.retrieve(args.q, args.top_n, retriever=args.retriever, params=params)
    if args.json:
        payload: dict = {
            "query": args.q,
            "retriever": args.retriever,
            "alpha": params.alpha,
            "top_n": args.top_n,
            "ranking": [{"doc_id": d, "score": s} for d, s in result.ranking],
            "trace": ctx.trace_payload() if ctx is not None else None,
        }
        if args.mock:
            payload = scrub_wall_ms(payload)
        sys.stdout.write(_dump_json(payload))
    else:
        for rank, (doc_id, score) in enumerate(result.ranking, start=1):
            print(f"{rank}\t{doc_id}\t{score:.6f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    runtime = Runtime.load(cfg, args.mock)
    records = load_eval(_require_file(args.dataset, "dataset"))
    params = runtime.params_with(alpha=args.alpha)
    top_n = max(max(DEFAULT_KS), len(runtime.doc_index))
    results = []
    for record in records:
        result, _ = runtime.retrieve(
            record.query, top_n, retriever=args.retriever, params=params, query_id=record.query_id
        )
        results.append(result)
    report = evaluate(results, records, include_per_query=args.per_query)
    write_metrics(report, args.out)
    print(f"retriever={args.retriever} alpha={params.alpha} queries={report.n_queries}")
    print(f"map        {report.map:.6f}")
    for k in sorted(report.recall_at):
        print(f"recall@{k:<4}{report.recall_at[k]:.6f}")
    print(f"metrics written to {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    triplets_file = kg_path(args.kg)
    if not triplets_file.is_file():
        raise ConfigError(f"knowledge graph file {triplets_file} does not exist")
    kg = KnowledgeGraph.load(triplets_file)
    records = load_eval(_require_file(args.queries, "queries"))
    queryset = [(r.query_id, r.query) for r in records]
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if args.config:
        cfg = load_config(args.config)
        params, dim = cfg.params, cfg.provider.embedding_dim
    else:
        params, dim = PipelineParams(), 64
    rows = bench_mod.bench_completion(kg, queryset, params, modes, dim=dim)
    csv_text = bench_mod.render_bench_csv(rows)
    if args.out == "-":
        sys.stdout.write(csv_text)
    else:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"benchmark written to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    return serve(cfg, args.mock)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgcqr",
        description="Knowledge-graph contextual query retrieval engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-kg", help="extract a knowledge graph from a corpus")
    p.add_argument("--corpus", required=True, help="corpus.jsonl input")
    p.add_argument("--out", required=True, help="output directory for triplets.jsonl and report.json")
    p.add_argument("--config", required=True)
    p.add_argument("--mock", action="store_true", help="use the deterministic offline providers")
    p.add_argument("--max-chars", type=int, default=DEFAULT_MAX_CHARS, help="chunk size")
    p.add_argument("--overlap", type=int, default=DEFAULT_OVERLAP, help="chunk overlap")
    p.set_defaults(func=cmd_build_kg)

    p = sub.add_parser("index", help="embed documents and ttrs into vector indexes")
    p.add_argument("--kg", required=True, help="build-kg output directory (or triplets file)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory for doc.idx and ttr.idx")
    p.add_argument("--config", required=True)
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="retrieve documents for one query")
    p.add_argument("--q", required=True, help="query text")
    p.add_argument("--config", required=True)
    p.add_argument("--alpha", type=float, default=None, help="fusion weight override")
    p.add_argument("--k", type=int, default=None, help="subgraph extraction size override")
    p.add_argument("--retriever", choices=RETRIEVERS, default="dense")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--json", action="store_true", help="emit ranking plus pipeline trace as JSON")
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="run a retriever over an eval set and report metrics")
    p.add_argument("--dataset", required=True, help="eval.jsonl input")
    p.add_argument("--config", required=True)
    p.add_argument("--retriever", choices=RETRIEVERS, required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", default="metrics.json")
    p.add_argument("--per-query", action="store_true", help="include per-query rows in metrics.json")
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="benchmark the completion stage")
    p.add_argument("--kg", required=True)
    p.add_argument("--queries", required=True, help="eval.jsonl-format query file")
    p.add_argument("--modes", required=True, help="comma list of beam,naive_bfs,no_completion")
    p.add_argument("--out", default="-", help="CSV path, or - for stdout")
    p.add_argument("--config", default=None, help="optional config for params/dim")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="serve /retrieve and /context over HTTP")
    p.add_argument("--config", required=True)
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KgcqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
