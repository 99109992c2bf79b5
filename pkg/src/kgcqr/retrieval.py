"""Retrievers: dense (plain or context-fused), Okapi BM25, and the
hypothetical-document baseline.

All rankings are deterministic: scores sort descending and ties break on
ascending doc_id. BM25 uses k1=1.2, b=0.75, clamps negative IDF to zero, and
drops zero-score documents from the ranking.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph import Document
from .pipeline import ContextResult
from .providers import ChatFn, EmbedFn, ProviderResponseError
from .templates import PromptTemplate
from .vindex import VectorIndex

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

BM25_K1 = 1.2
BM25_B = 0.75


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens (split on non-alphanumerics)."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class RankedResult:
    query_id: str
    ranking: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        prev = math.inf
        for doc_id, score in self.ranking:
            if doc_id in seen:
                raise ValidationError(f"duplicate doc_id {doc_id!r} in ranking")
            seen.add(doc_id)
            if score > prev + 1e-12:
                raise ValidationError("ranking scores are not non-increasing")
            prev = score

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.ranking]


class BM25Index:
    """Inverted index with document lengths for Okapi scoring."""

    def __init__(self, corpus: list[Document], k1: float = BM25_K1, b: float = BM25_B):
        if not corpus:
            raise ValidationError("BM25 needs a non-empty corpus")
        self.k1 = k1
        self.b = b
        self.doc_ids = [d.doc_id for d in corpus]
        self.doc_len: dict[str, int] = {}
        self.postings: dict[str, dict[str, int]] = {}
        for d in corpus:
            toks = tokenize(d.text)
            self.doc_len[d.doc_id] = len(toks)
            for term, tf in Counter(toks).items():
                self.postings.setdefault(term, {})[d.doc_id] = tf
        self.n_docs = len(corpus)
        self.avgdl = sum(self.doc_len.values()) / self.n_docs

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        return max(0.0, math.log((self.n_docs - df + 0.5) / (df + 0.5)))

    def search(self, query_text: str, top_n: int) -> list[tuple[str, float]]:
        """Okapi BM25 ranking; query terms count once per occurrence;
        documents scoring zero are left out."""
        if top_n <= 0:
            raise ValidationError("top_n must be positive")
        terms = tokenize(query_text)
        if not terms:
            return []
        scores: dict[str, float] = {}
        for term in terms:
            idf = self.idf(term)
            if idf == 0.0:
                continue
            for doc_id, tf in self.postings[term].items():
                dl = self.doc_len[doc_id]
                norm = tf + self.k1 * (1.0 - self.b + self.b * dl / self.avgdl)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (self.k1 + 1.0) / norm
        ranked = sorted(
            ((d, s) for d, s in scores.items() if s > 0.0),
            key=lambda item: (-item[1], item[0]),
        )
        return ranked[:top_n]


def bm25_build(corpus: list[Document]) -> BM25Index:
    return BM25Index(corpus)


def bm25_search(ix: BM25Index, query_text: str, top_n: int, query_id: str = "") -> RankedResult:
    return RankedResult(query_id, ix.search(query_text, top_n))


def dense_retrieve(
    query: str,
    context: ContextResult | None,
    doc_index: VectorIndex,
    embed: EmbedFn,
    top_n: int,
    query_id: str = "",
) -> RankedResult:
    """Search the document index with the fused vector when a context result
    is given, else with the plain unit query embedding."""
    if context is not None:
        vec = context.fused_vector
    else:
        vec = np.asarray(embed([query])[0].values, dtype=np.float64)
    return RankedResult(query_id, doc_index.search(vec, top_n))


def sparse_cqr_retrieve(
    query: str,
    context_text: str,
    bm25_ix: BM25Index,
    top_n: int,
    query_id: str = "",
) -> RankedResult:
    """BM25 over the query concatenated with the generated context (single
    space separator); an empty context degenerates to plain BM25."""
    lexical_query = f"{query} {context_text}" if context_text else query
    return RankedResult(query_id, bm25_ix.search(lexical_query, top_n))


def hyde_retrieve(
    query: str,
    chat: ChatFn,
    embed: EmbedFn,
    doc_index: VectorIndex,
    top_n: int,
    template: PromptTemplate,
    query_id: str = "",
) -> RankedResult:
    """Embed an LLM-written hypothetical answer document and search with it
    (document-to-document similarity)."""
    if template.id != "hyde":
        raise ValidationError(f"hyde retrieval needs the hyde template, got {template.id!r}")
    hypothetical = chat(template.request(query=query)).strip()
    if not hypothetical:
        raise ProviderResponseError("hypothetical document generation returned empty text")
    vec = np.asarray(embed([hypothetical])[0].values, dtype=np.float64)
    return RankedResult(query_id, doc_index.search(vec, top_n))
