"""Contextual query enrichment over the knowledge graph.

The stages, in order: pick the top-k triplets whose ttr embeddings match the
query (extract), ask an LLM judge to drop irrelevant ones (filter), add up to
K triplets lying on high-scoring directed paths between the subgraph's
entities (complete), have an LLM write a context passage from the result
(generate), and search with the weighted sum of query and context embeddings
(fuse). The fused vector is deliberately NOT renormalized: with unit document
vectors its dot-product score is exactly the convex combination
alpha*<v_q,v_d> + (1-alpha)*<v_ctx,v_d>, which renormalizing would break.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import IntegrityError, KgcqrError, ValidationError
from .graph import KnowledgeGraph, Path, Subgraph, SubgraphEntry
from .providers import (
    ChatFn,
    EmbedFn,
    EmbeddingVector,
    ProviderError,
    ProviderResponseError,
)
from .templates import PromptTemplate, TemplateSet
from .vindex import VectorIndex

log = logging.getLogger(__name__)

TRACE_STAGES = ("extract", "filter", "complete", "generate", "fuse")

# Score comparisons allow a little float32 slack around the cosine bounds.
_SCORE_TOL = 1e-6


class StageError(KgcqrError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@dataclass
class PipelineParams:
    """Tuning knobs. k_extract bounds the initial subgraph, k_complete (K)
    bounds path-harvested additions, max_path_len (L) and beam_width (W)
    shape the traversal, alpha weighs query vs. context at fusion."""

    k_extract: int = 20
    k_complete: int = 20
    max_path_len: int = 3
    beam_width: int = 3
    alpha: float = 0.7
    filter_enabled: bool = True

    def __post_init__(self) -> None:
        if self.k_extract < 0:
            raise ValidationError("k_extract must be >= 0")
        if self.k_complete < 1:
            raise ValidationError("k_complete must be >= 1")
        if self.max_path_len < 1:
            raise ValidationError("max_path_len must be >= 1")
        if self.beam_width < 1:
            raise ValidationError("beam_width must be >= 1")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class ScoredPath:
    path: Path
    score: float

    def __post_init__(self) -> None:
        if abs(self.score) > 1.0 + _SCORE_TOL:
            raise ValidationError(f"path score {self.score} outside [-1, 1]")


@dataclass
class FilterStats:
    kept: int = 0
    dropped: int = 0
    errors: int = 0


@dataclass
class CompletionStats:
    """Traversal instrumentation. ``expansions`` counts dequeued states that
    reach the neighbor scan (the cost driver the beam is meant to bound)."""

    expansions: int = 0
    paths: int = 0
    added: int = 0


@dataclass
class ProviderBundle:
    """Everything the pipeline needs from the outside world."""

    chat: ChatFn
    embed: EmbedFn
    templates: TemplateSet


@dataclass
class ContextResult:
    context_text: str
    subgraph: Subgraph
    fused_vector: np.ndarray
    trace: dict

    def subgraph_records(self) -> list[dict]:
        out = []
        for entry in self.subgraph:
            rec = entry.triplet.to_record()
            rec["score"] = None if entry.score is None else float(entry.score)
            out.append(rec)
        return out

    def trace_payload(self) -> dict:
        """JSON-friendly trace for the CLI and the serving mode."""
        return {
            "context": self.context_text,
            "subgraph": self.subgraph_records(),
            "stages": self.trace,
        }


@contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except KgcqrError as exc:
        raise StageError(name, exc) from exc


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def _check_index_covers(kg: KnowledgeGraph, ttr_index: VectorIndex) -> None:
    kg_keys = {t.key() for t in kg.triplets}
    ix_keys = set(ttr_index.key_lookup)
    if kg_keys != ix_keys:
        missing = sorted(kg_keys - ix_keys)[:3]
        extra = sorted(ix_keys - kg_keys)[:3]
        raise IntegrityError(
            f"ttr index does not match the graph "
            f"(missing {missing!r}, extra {extra!r}, counts {len(kg_keys)} vs {len(ix_keys)})"
        )


def extract_subgraph(
    query: str,
    kg: KnowledgeGraph,
    ttr_index: VectorIndex,
    embed: EmbedFn,
    k: int,
    query_vec: EmbeddingVector | None = None,
) -> Subgraph:
    """Top-k triplets by ttr-embedding similarity to the query, scored and
    sorted descending. Exact: equivalent to ranking every triplet."""
    if k < 0:
        raise ValidationError("k must be >= 0")
    _check_index_covers(kg, ttr_index)
    if k == 0 or len(kg) == 0:
        return Subgraph()
    v_q = query_vec if query_vec is not None else embed([query])[0]
    hits = ttr_index.search(np.asarray(v_q.values, dtype=np.float64), top_n=k)
    entries = []
    for key, score in hits:
        bare = tuple(key.split("\t"))
        triplet = kg.get(bare)  # covered: key sets were just compared
        entries.append(SubgraphEntry(triplet, score))
    return Subgraph(entries)


def filter_subgraph(
    query: str,
    sg: Subgraph,
    chat: ChatFn,
    template: PromptTemplate,
    stats: FilterStats | None = None,
) -> Subgraph:
    """Keep the triplets the judge affirms. A response counts as affirmative
    iff, trimmed and case-folded, it starts with "true" or "yes". Provider
    errors keep the triplet (fail open) so a flaky judge cannot silently
    shrink the evidence."""
    if template.id != "filter":
        raise ValidationError(f"filtering needs the filter template, got {template.id!r}")
    kept: list[SubgraphEntry] = []
    for entry in sg:
        req = template.request(max_tokens=8, query=query, triplet=entry.triplet.as_line(with_ttr=True))
        try:
            keep = chat(req).strip().casefold().startswith(("true", "yes"))
        except ProviderError as exc:
            log.warning("filter judge failed on %s: %s", entry.triplet.bare(), exc)
            keep = True
            if stats:
                stats.errors += 1
        if keep:
            kept.append(entry)
            if stats:
                stats.kept += 1
        elif stats:
            stats.dropped += 1
    return Subgraph(kept)


def bfs_beam(
    kg: KnowledgeGraph,
    e_s: str,
    e_t: str,
    t_set: set[tuple[str, str, str]],
    L: int,
    query_vec: EmbeddingVector | None,
    ttr_vecs: Mapping[tuple[str, str, str], np.ndarray],
    W: int | None,
    stats: CompletionStats | None = None,
) -> list[Path]:
    """Breadth-first path search from e_s to e_t, keeping only the W best
    extensions per expanded node.

    Candidates are the outgoing triplets whose tail is not already on the
    path (the source counts as visited), scored by the new edge's
    ttr-query cosine (0 without a query), ordered descending with ties by
    ascending (head, relation, tail). A dequeued state longer than L is
    discarded; a state ending at e_t is never extended and its path, if
    non-empty, is emitted. W = None removes the width bound (naive BFS).
    ``t_set`` names the already-known triples; traversal does not consult
    it, it rides along for the harvesting caller.
    """
    del t_set  # not used during traversal
    if L < 1:
        raise ValidationError("max path length must be >= 1")
    if W is not None and W < 1:
        raise ValidationError("beam width must be >= 1")
    q64 = None if query_vec is None else np.asarray(query_vec.values, dtype=np.float64)
    queue: deque[tuple[str, tuple, frozenset]] = deque()
    queue.append((e_s, (), frozenset((e_s,))))
    emitted: list[Path] = []
    while queue:
        node, edges, visited = queue.popleft()
        if len(edges) > L:
            continue
        if node == e_t:
            if edges:
                emitted.append(Path(list(edges)))
            continue
        if stats is not None:
            stats.expansions += 1
        candidates = []
        for t in kg.neighbors(node):
            if t.tail in visited:
                continue
            vec = ttr_vecs.get(t.bare())
            score = 0.0 if q64 is None or vec is None else float(vec @ q64)
            candidates.append((score, t))
        candidates.sort(key=lambda c: (-c[0], c[1].bare()))
        for score, t in candidates if W is None else candidates[:W]:
            queue.append((t.tail, edges + (t,), visited | {t.tail}))
    return emitted


def _ttr_vector_map(
    kg: KnowledgeGraph,
    ttr_index: VectorIndex | None,
    embed: EmbedFn,
) -> dict[tuple[str, str, str], np.ndarray]:
    """Float64 ttr vectors for every graph triplet, from the prebuilt index
    when given (no re-embedding during traversal), else embedded in bulk."""
    vecs: dict[tuple[str, str, str], np.ndarray] = {}
    if not kg.triplets:
        return vecs
    if ttr_index is not None:
        for t in kg.triplets:
            key = t.key()
            if key in ttr_index.key_lookup:
                vecs[t.bare()] = np.asarray(ttr_index.vector(key), dtype=np.float64)
        return vecs
    embedded = embed([t.ttr for t in kg.triplets])
    for t, v in zip(kg.triplets, embedded):
        vecs[t.bare()] = np.asarray(v.values, dtype=np.float64)
    return vecs


def complete_subgraph(
    kg: KnowledgeGraph,
    initial: Subgraph,
    query: str,
    params: PipelineParams,
    embed: EmbedFn,
    ttr_index: VectorIndex | None = None,
    stats: CompletionStats | None = None,
    query_vec: EmbeddingVector | None = None,
) -> Subgraph:
    """Add up to k_complete triplets lying on directed paths between the
    initial subgraph's entities.

    Paths are collected by bfs_beam over every ordered pair of distinct
    entities, deduplicated, and ranked by the mean of their per-edge
    ttr-query cosines (0 without a query; a path missing any edge vector is
    skipped). Triples are harvested from the best paths in path order,
    skipping ones already present, stopping as soon as k_complete new triples
    are collected. No paths means the input comes back unchanged.
    """
    for entry in initial:
        if not kg.contains_bare(entry.triplet.bare()):
            raise ValidationError(f"initial subgraph triplet {entry.triplet.bare()} not in graph")
    ents = initial.entity_ids()
    if len(ents) < 2:
        return initial
    v_q = query_vec if query_vec is not None else (embed([query])[0] if query else None)
    q64 = None if v_q is None else np.asarray(v_q.values, dtype=np.float64)
    t_set = initial.bare_set()
    ttr_vecs = _ttr_vector_map(kg, ttr_index, embed)
    paths: list[Path] = []
    seen: set[tuple] = set()
    for e_i in ents:
        for e_j in ents:
            if e_i == e_j:
                continue
            for p in bfs_beam(
                kg, e_i, e_j, t_set, params.max_path_len, v_q, ttr_vecs, params.beam_width, stats
            ):
                key = p.edge_keys()
                if key not in seen:
                    seen.add(key)
                    paths.append(p)
    if not paths:
        return initial
    scored: list[ScoredPath] = []
    for p in paths:
        vecs = [ttr_vecs.get(e.bare()) for e in p.edges]
        if any(v is None for v in vecs):
            continue  # every edge needs its description vector to be scorable
        s = 0.0 if q64 is None else float(sum(v @ q64 for v in vecs) / len(vecs))
        scored.append(ScoredPath(p, s))
    scored.sort(key=lambda sp: (-sp.score, sp.path.edge_keys()))
    added: list[tuple[str, str, str]] = []
    added_set: set[tuple[str, str, str]] = set()
    for sp in scored:
        if len(added) >= params.k_complete:
            break
        for e in sp.path.edges:
            b = e.bare()
            if b in t_set or b in added_set:
                continue
            added.append(b)
            added_set.add(b)
            if len(added) >= params.k_complete:
                break
    if stats is not None:
        stats.paths = len(scored)
        stats.added = len(added)
    if not added:
        return initial
    entries = list(initial.entries) + [SubgraphEntry(kg.get(b)) for b in added]
    return Subgraph(entries)


def generate_context(sg: Subgraph, chat: ChatFn, template: PromptTemplate) -> str:
    """LLM-written context passage for the subgraph, one
    "head | relation | tail | ttr" line per triplet in the prompt. An empty
    subgraph yields "" without calling the provider."""
    if template.id != "generate":
        raise ValidationError(f"generation needs the generate template, got {template.id!r}")
    if len(sg) == 0:
        return ""
    block = "\n".join(t.as_line(with_ttr=True) for t in sg.triplets())
    reply = chat(template.request(max_tokens=1024, triplets=block)).strip()
    if not reply:
        raise ProviderResponseError("context generation returned empty text for a non-empty subgraph")
    return reply


def fuse(v_q: EmbeddingVector, v_ctx: EmbeddingVector, alpha: float) -> np.ndarray:
    """Componentwise alpha*v_q + (1-alpha)*v_ctx, float64, not renormalized."""
    if not (0.0 <= alpha <= 1.0):
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    if v_q.dim != v_ctx.dim:
        raise ValidationError(f"fusion dims differ: {v_q.dim} vs {v_ctx.dim}")
    a = np.asarray(v_q.values, dtype=np.float64)
    b = np.asarray(v_ctx.values, dtype=np.float64)
    return alpha * a + (1.0 - alpha) * b


def contextualize(
    query: str,
    kg: KnowledgeGraph,
    ttr_index: VectorIndex,
    providers: ProviderBundle,
    params: PipelineParams,
) -> ContextResult:
    """Run the full enrichment: extract, filter, complete, generate, fuse.

    When generation yields no text the fused vector degenerates to the plain
    query embedding (an alpha=1 run). Each trace stage records wall time and
    the counts that stage produced.
    """
    trace: dict[str, dict] = {}
    with _stage("extract"):
        t0 = time.perf_counter()
        v_q = providers.embed([query])[0]
        sg = extract_subgraph(query, kg, ttr_index, providers.embed, params.k_extract, query_vec=v_q)
        trace["extract"] = {"wall_ms": _ms(t0), "triplets": len(sg)}
    with _stage("filter"):
        t0 = time.perf_counter()
        fstats = FilterStats()
        if params.filter_enabled:
            sg = filter_subgraph(query, sg, providers.chat, providers.templates.get("filter"), stats=fstats)
        else:
            fstats.kept = len(sg)
        trace["filter"] = {
            "wall_ms": _ms(t0),
            "enabled": params.filter_enabled,
            "kept": fstats.kept,
            "dropped": fstats.dropped,
            "errors": fstats.errors,
        }
    with _stage("complete"):
        t0 = time.perf_counter()
        cstats = CompletionStats()
        sg = complete_subgraph(
            kg, sg, query, params, providers.embed, ttr_index=ttr_index, stats=cstats, query_vec=v_q
        )
        trace["complete"] = {
            "wall_ms": _ms(t0),
            "paths": cstats.paths,
            "expansions": cstats.expansions,
            "added": cstats.added,
            "triplets": len(sg),
        }
    with _stage("generate"):
        t0 = time.perf_counter()
        context_text = generate_context(sg, providers.chat, providers.templates.get("generate"))
        trace["generate"] = {"wall_ms": _ms(t0), "chars": len(context_text)}
    with _stage("fuse"):
        t0 = time.perf_counter()
        if context_text:
            v_ctx = providers.embed([context_text])[0]
            fused = fuse(v_q, v_ctx, params.alpha)
            fallback = False
        else:
            fused = np.asarray(v_q.values, dtype=np.float64).copy()
            fallback = True
        trace["fuse"] = {"wall_ms": _ms(t0), "alpha": params.alpha, "fallback": fallback}
    return ContextResult(context_text, sg, fused, trace)
