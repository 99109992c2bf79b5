"""Shared runtime assembly: providers, loaded artifacts, retriever dispatch.

Both the CLI commands and the serving mode build a Runtime from an AppConfig
and use the same dispatch, so a query answered over HTTP and one answered on
the command line cannot diverge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .config import AppConfig
from .errors import ConfigError
from .graph import TRIPLETS_FILENAME, Document, KnowledgeGraph, load_corpus
from .mocks import MockEmbeddingProvider, default_mock_chat
from .pipeline import ContextResult, PipelineParams, ProviderBundle, contextualize
from .providers import OpenAICompatClient, set_max_inflight
from .retrieval import (
    BM25Index,
    RankedResult,
    bm25_build,
    dense_retrieve,
    hyde_retrieve,
    sparse_cqr_retrieve,
)
from .templates import TemplateSet
from .vindex import VectorIndex

RETRIEVERS = ("dense", "bm25", "hyde", "plain")


def make_providers(cfg: AppConfig, mock: bool) -> ProviderBundle:
    templates = TemplateSet.load(cfg.paths.templates_dir)
    if mock:
        return ProviderBundle(
            chat=default_mock_chat().chat,
            embed=MockEmbeddingProvider(cfg.provider.embedding_dim).embed,
            templates=templates,
        )
    set_max_inflight(cfg.max_inflight)
    client = OpenAICompatClient(cfg.provider)
    return ProviderBundle(chat=client.chat, embed=client.embed, templates=templates)


def kg_path(configured: str) -> Path:
    """The triplets file for a configured kg path (directory or file)."""
    p = Path(configured)
    return p / TRIPLETS_FILENAME if p.is_dir() else p


def scrub_wall_ms(payload):
    """Zero every wall_ms in a trace payload, recursively. Run outputs under
    the mock providers are byte-reproducible except for timings; golden-file
    tests compare scrubbed payloads."""
    if isinstance(payload, dict):
        return {
            k: (0.0 if k == "wall_ms" else scrub_wall_ms(v)) for k, v in payload.items()
        }
    if isinstance(payload, list):
        return [scrub_wall_ms(v) for v in payload]
    return payload


@dataclass
class Runtime:
    cfg: AppConfig
    providers: ProviderBundle
    kg: KnowledgeGraph
    doc_index: VectorIndex
    ttr_index: VectorIndex
    corpus: list[Document] | None
    bm25: BM25Index | None
    mock: bool

    @classmethod
    def load(cls, cfg: AppConfig, mock: bool) -> "Runtime":
        providers = make_providers(cfg, mock)
        for label, value in (("paths.kg", cfg.paths.kg), ("paths.doc_index", cfg.paths.doc_index), ("paths.ttr_index", cfg.paths.ttr_index)):
            if not value:
                raise ConfigError(f"{label} is not configured")
        triplets_file = kg_path(cfg.paths.kg)
        if not triplets_file.is_file():
            raise ConfigError(f"knowledge graph file {triplets_file} does not exist")
        kg = KnowledgeGraph.load(triplets_file)
        for label, value in (("doc index", cfg.paths.doc_index), ("ttr index", cfg.paths.ttr_index)):
            if not Path(value).is_file():
                raise ConfigError(f"{label} file {value} does not exist")
        doc_index = VectorIndex.load(cfg.paths.doc_index)
        ttr_index = VectorIndex.load(cfg.paths.ttr_index)
        corpus = None
        bm25 = None
        if cfg.paths.corpus:
            if not Path(cfg.paths.corpus).is_file():
                raise ConfigError(f"corpus file {cfg.paths.corpus} does not exist")
            corpus = load_corpus(cfg.paths.corpus)
            bm25 = bm25_build(corpus)
        return cls(cfg, providers, kg, doc_index, ttr_index, corpus, bm25, mock)

    def params_with(self, alpha: float | None = None, k_extract: int | None = None) -> PipelineParams:
        params = self.cfg.params
        if alpha is not None:
            params = replace(params, alpha=alpha)
        if k_extract is not None:
            params = replace(params, k_extract=k_extract)
        return params

    def contextualize(self, query: str, params: PipelineParams | None = None) -> ContextResult:
        return contextualize(
            query, self.kg, self.ttr_index, self.providers, params or self.cfg.params
        )

    def retrieve(
        self,
        query: str,
        top_n: int,
        retriever: str = "dense",
        params: PipelineParams | None = None,
        query_id: str = "",
    ) -> tuple[RankedResult, ContextResult | None]:
        """Run one retriever; the second element is the pipeline trace for
        the context-driven modes, None for the plain baselines."""
        if retriever not in RETRIEVERS:
            raise ConfigError(f"unknown retriever {retriever!r} (choose from {RETRIEVERS})")
        params = params or self.cfg.params
        if retriever == "plain":
            return dense_retrieve(query, None, self.doc_index, self.providers.embed, top_n, query_id), None
        if retriever == "hyde":
            result = hyde_retrieve(
                query,
                self.providers.chat,
                self.providers.embed,
                self.doc_index,
                top_n,
                self.providers.templates.get("hyde"),
                query_id,
            )
            return result, None
        ctx = self.contextualize(query, params)
        if retriever == "dense":
            return dense_retrieve(query, ctx, self.doc_index, self.providers.embed, top_n, query_id), ctx
        if self.bm25 is None:
            raise ConfigError("bm25 retrieval needs paths.corpus in the config")
        return sparse_cqr_retrieve(query, ctx.context_text, self.bm25, top_n, query_id), ctx
