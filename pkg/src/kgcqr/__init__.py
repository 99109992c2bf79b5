"""Knowledge-graph contextual query retrieval.

Build a knowledge graph from a corpus with LLM extraction, enrich queries by
extracting and completing query-relevant subgraphs, generate contextual query
text, and retrieve documents with weighted-sum fused embeddings. Ships with
deterministic mock providers, BM25 and hypothetical-document baselines, an
evaluation harness, a latency benchmark, a CLI, and an HTTP serving mode.
"""

from .errors import (
    ConfigError,
    IntegrityError,
    KgcqrError,
    ParseError,
    ValidationError,
)
from .graph import Document, Entity, KnowledgeGraph, Path, Subgraph, SubgraphEntry, Triplet
from .pipeline import (
    ContextResult,
    PipelineParams,
    ProviderBundle,
    bfs_beam,
    complete_subgraph,
    contextualize,
    extract_subgraph,
    filter_subgraph,
    fuse,
    generate_context,
)
from .providers import ChatRequest, EmbeddingVector, ProviderConfig
from .retrieval import BM25Index, RankedResult, bm25_build, bm25_search, dense_retrieve
from .vindex import VectorIndex

__version__ = "0.1.0"

__all__ = [
    "BM25Index",
    "ChatRequest",
    "ConfigError",
    "ContextResult",
    "Document",
    "EmbeddingVector",
    "Entity",
    "IntegrityError",
    "KgcqrError",
    "KnowledgeGraph",
    "ParseError",
    "Path",
    "PipelineParams",
    "ProviderBundle",
    "ProviderConfig",
    "RankedResult",
    "Subgraph",
    "SubgraphEntry",
    "Triplet",
    "ValidationError",
    "VectorIndex",
    "bfs_beam",
    "bm25_build",
    "bm25_search",
    "complete_subgraph",
    "contextualize",
    "dense_retrieve",
    "extract_subgraph",
    "filter_subgraph",
    "fuse",
    "generate_context",
    "__version__",
]
