"""Latency and expansion-count benchmark for the completion stage.

Three modes: "beam" (the configured width), "naive_bfs" (width unbounded),
and "no_completion" (the stage skipped; zero expansions). Rows carry wall
time and traversal expansion counts per (mode, query). The deterministic
token-hash embedder supplies the scores so the benchmark runs offline; the
comparison is between modes, never across embedders.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .graph import KnowledgeGraph, Subgraph, SubgraphEntry
from .mocks import MockEmbeddingProvider
from .pipeline import CompletionStats, PipelineParams, complete_subgraph
from .vindex import VectorIndex

BENCH_MODES = ("beam", "naive_bfs", "no_completion")
CSV_COLUMNS = ("mode", "query_id", "wall_ms", "expansions")

# Stands in for an unbounded beam: per-node candidate lists are always
# shorter than this.
_NAIVE_WIDTH = 2**31


@dataclass
class BenchRow:
    mode: str
    query_id: str
    wall_ms: float
    expansions: int


def bench_completion(
    kg: KnowledgeGraph,
    queryset: Sequence[tuple[str, str]],
    params: PipelineParams,
    modes: Sequence[str],
    dim: int = 64,
) -> list[BenchRow]:
    """Time the completion stage per query and mode.

    The initial subgraph per query is the top-k_extract triplets by
    ttr-query similarity, computed once and shared across modes so the
    traversal inputs are identical. Timed region: the completion call only.
    """
    if not modes:
        raise ValidationError("no bench modes given")
    for mode in modes:
        if mode not in BENCH_MODES:
            raise ValidationError(f"unknown bench mode {mode!r}")
    if not queryset:
        raise ValidationError("no bench queries given")
    emb = MockEmbeddingProvider(dim)
    # Embed every ttr once, up front: the timed region must cover the
    # traversal, not embedding I/O, and all modes must see the same vectors.
    ttr_index = VectorIndex(dim)
    ttr_vecs: list[np.ndarray] = []
    if kg.triplets:
        for t, v in zip(kg.triplets, emb.embed([t.ttr or t.key() for t in kg.triplets])):
            ttr_index.add(t.key(), v)
            ttr_vecs.append(np.asarray(v.values, dtype=np.float64))
    rows: list[BenchRow] = []
    for query_id, query in queryset:
        v_q = emb.embed([query])[0]
        q64 = np.asarray(v_q.values, dtype=np.float64)
        scored = sorted(
            ((float(vec @ q64), t.key(), i) for i, (vec, t) in enumerate(zip(ttr_vecs, kg.triplets))),
            key=lambda item: (-item[0], item[1]),
        )
        initial = Subgraph(
            SubgraphEntry(kg.triplets[i], s) for s, _, i in scored[: params.k_extract]
        )
        for mode in modes:
            stats = CompletionStats()
            t0 = time.perf_counter()
            if mode != "no_completion":
                width = params.beam_width if mode == "beam" else _NAIVE_WIDTH
                complete_subgraph(
                    kg,
                    initial,
                    query,
                    replace(params, beam_width=width),
                    emb.embed,
                    ttr_index=ttr_index,
                    stats=stats,
                    query_vec=v_q,
                )
            wall_ms = (time.perf_counter() - t0) * 1000.0
            rows.append(BenchRow(mode, query_id, wall_ms, stats.expansions))
    return rows


def render_bench_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([row.mode, row.query_id, f"{row.wall_ms:.3f}", row.expansions])
    return buf.getvalue()


def write_bench_csv(rows: Sequence[BenchRow], path: str | Path) -> None:
    Path(path).write_text(render_bench_csv(rows), encoding="utf-8")
