"""Deterministic offline providers used by tests and the --mock CLI mode.

The mock embedder hashes tokens into buckets (signed hashing trick) and
L2-normalizes, so texts sharing tokens land closer in cosine space. The mock
chat provider answers from a rule table keyed on the prompt-template id and
placeholder contents, falling back to echoing the user prompt. Both are pure
functions of their inputs, which makes golden-file tests valid.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .providers import ChatRequest, EmbeddingVector

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def _tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def mock_embed(text: str, dim: int) -> EmbeddingVector:
    """Deterministic token-bag embedding: each token is hashed to a bucket
    and a sign, occurrences accumulate, and the result is unit-normalized."""
    if dim < 8:
        raise ValidationError("mock embedding dim must be >= 8")
    tokens = _tokenize(text)
    if not tokens:
        tokens = [text or "∅"]
    acc = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=16).digest(), "big")
        bucket = h % dim
        sign = 1.0 if (h >> 127) & 1 == 0 else -1.0
        acc[bucket] += sign
    if not acc.any():
        acc[0] = 1.0  # opposing-sign collision wiped the bag; keep it unit-normalizable
    return EmbeddingVector.normalized(acc)


class MockEmbeddingProvider:
    """Batch wrapper around mock_embed with the provider embed signature."""

    def __init__(self, dim: int):
        if dim < 8:
            raise ValidationError("mock embedding dim must be >= 8")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValidationError("embed called with an empty text list")
        return [mock_embed(t, self.dim) for t in texts]


@dataclass
class MockRule:
    """One row of the canned-response table.

    ``template`` restricts the rule to one prompt-template id (None = any).
    ``contains`` must occur in the matched text: the named ``placeholder``
    value when given, otherwise the rendered user prompt. ``reply`` is the
    canned string or a function of the full request.
    """

    template: str | None = None
    contains: str | None = None
    placeholder: str | None = None
    reply: str | Callable[[ChatRequest], str] = ""

    def matches(self, req: ChatRequest) -> bool:
        if self.template is not None and req.meta.get("template") != self.template:
            return False
        if self.contains is None:
            return True
        haystack = (
            req.meta.get(self.placeholder, "") if self.placeholder is not None else req.user_prompt
        )
        return self.contains in haystack

    def render(self, req: ChatRequest) -> str:
        return self.reply(req) if callable(self.reply) else self.reply


class MockChatProvider:
    """Rule-table chat provider; first matching rule wins, else echo."""

    def __init__(self, rules: Sequence[MockRule] = ()):
        self.rules = list(rules)

    def chat(self, req: ChatRequest) -> str:
        for rule in self.rules:
            if rule.matches(req):
                return rule.render(req)
        return req.user_prompt


_PIPE_LINE_RE = re.compile(r"^\s*([^|\n]+)\|([^|\n]+)\|([^|\n]+?)\s*$", re.MULTILINE)


def _extract_reply(req: ChatRequest) -> str:
    """Pass through any 'head | relation | tail' lines found in the document."""
    doc = req.meta.get("document", "")
    lines = []
    for m in _PIPE_LINE_RE.finditer(doc):
        lines.append(f"{m.group(1).strip()} | {m.group(2).strip()} | {m.group(3).strip()}")
    return "\n".join(lines)


def _ttr_reply(req: ChatRequest) -> str:
    triplet = req.meta.get("triplet", "")
    parts = [p.strip() for p in triplet.split("|")]
    if len(parts) == 3:
        head, rel, tail = parts
        return f"{head} {rel.replace('_', ' ')} {tail}."
    return triplet


def _generate_reply(req: ChatRequest) -> str:
    """Stitch the ttr column of the rendered triplet block into a paragraph."""
    block = req.meta.get("triplets", "")
    sentences = []
    for line in block.splitlines():
        parts = [p.strip() for p in line.split("|")]
        if len(parts) >= 4 and parts[3]:
            sentences.append(parts[3])
        elif len(parts) == 3:
            sentences.append(f"{parts[0]} {parts[1]} {parts[2]}.")
    return " ".join(sentences)


def _filter_reply(req: ChatRequest) -> str:
    """Keep a triplet iff its head or tail shares a token with the query."""
    query_tokens = set(_tokenize(req.meta.get("query", "")))
    parts = [p.strip() for p in req.meta.get("triplet", "").split("|")]
    if len(parts) < 3:
        return "True"
    entity_tokens = set(_tokenize(parts[0])) | set(_tokenize(parts[2]))
    return "True" if entity_tokens & query_tokens else "False"


def _hyde_reply(req: ChatRequest) -> str:
    return req.meta.get("query", req.user_prompt)


def default_mock_chat() -> MockChatProvider:
    """The canned table behind --mock: extraction passes through pipe-format
    fact lines, ttr verbalizes the triple, the filter keeps triples whose
    entities overlap the query, context generation joins ttr sentences, and
    hyde echoes the query."""
    return MockChatProvider(
        [
            MockRule(template="kg_extract", reply=_extract_reply),
            MockRule(template="ttr", reply=_ttr_reply),
            MockRule(template="filter", reply=_filter_reply),
            MockRule(template="generate", reply=_generate_reply),
            MockRule(template="hyde", reply=_hyde_reply),
        ]
    )
