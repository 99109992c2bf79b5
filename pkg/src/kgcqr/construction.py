"""Corpus ingestion and LLM-driven graph construction.

Documents are chunked, each chunk is sent through the extraction prompt, the
parsed triples are merged into one graph (bare-triple dedup, first source
wins), and every surviving triplet gets a textual description (ttr) from the
ttr prompt. Extraction responses must contain one "head | relation | tail"
line per triple; anything else on a line is recorded as a parse failure and
skipped, never aborting the document.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import KgcqrError, ValidationError
from .graph import Document, KnowledgeGraph, Triplet
from .providers import ChatFn, ProviderError
from .templates import PromptTemplate, TemplateSet

log = logging.getLogger(__name__)

DEFAULT_MAX_CHARS = 2000
DEFAULT_OVERLAP = 200


class BuildError(KgcqrError):
    """Extraction failed for every document; carries the per-document errors."""

    def __init__(self, message: str, failures: dict[str, str]):
        self.failures = failures
        detail = "; ".join(f"{d}: {e}" for d, e in sorted(failures.items()))
        super().__init__(f"{message} ({detail})" if detail else message)


@dataclass
class ExtractionRecord:
    """Outcome of one extraction call: what parsed and what did not."""

    doc_id: str
    raw_response: str
    parsed: list[tuple[str, str, str]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


@dataclass
class BuildReport:
    documents: int = 0
    chunks: int = 0
    triples_extracted: int = 0
    dedup_count: int = 0
    ttr_failures: int = 0
    triplets: int = 0
    doc_failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "chunks": self.chunks,
            "triples_extracted": self.triples_extracted,
            "dedup_count": self.dedup_count,
            "ttr_failures": self.ttr_failures,
            "triplets": self.triplets,
            "doc_failures": dict(sorted(self.doc_failures.items())),
        }


def chunk_corpus(doc: Document, max_chars: int = DEFAULT_MAX_CHARS, overlap: int = DEFAULT_OVERLAP) -> list[Document]:
    """Split a document into overlapping chunks of at most ``max_chars``.

    A document that already fits is returned as-is (same doc_id); otherwise
    chunk ids are "{doc_id}#<k>" counting from 0. Consecutive chunks share
    ``overlap`` characters.
    """
    if overlap < 0 or max_chars <= overlap:
        raise ValidationError("need max_chars > overlap >= 0")
    text = doc.text
    if len(text) <= max_chars:
        return [doc]
    chunks: list[Document] = []
    start = 0
    k = 0
    while True:
        end = min(start + max_chars, len(text))
        chunks.append(Document(f"{doc.doc_id}#{k}", text[start:end], dict(doc.meta)))
        if end >= len(text):
            return chunks
        start = end - overlap
        k += 1


def parse_triple_line(line: str) -> tuple[str, str, str] | None:
    """Parse one "head | relation | tail" line; None when it does not fit."""
    parts = [" ".join(p.split()) for p in line.split("|")]
    if len(parts) != 3 or not all(parts):
        return None
    return (parts[0], parts[1], parts[2])


def extract_triples(doc: Document, chat: ChatFn, template: PromptTemplate) -> ExtractionRecord:
    """Run the extraction prompt over one document and parse the response.

    Unparseable lines are collected in ``failures``; provider errors
    propagate to the caller.
    """
    if template.id != "kg_extract":
        raise ValidationError(f"extraction needs the kg_extract template, got {template.id!r}")
    response = chat(template.request(document=doc.text))
    record = ExtractionRecord(doc_id=doc.doc_id, raw_response=response)
    for line in response.splitlines():
        if not line.strip():
            continue
        triple = parse_triple_line(line)
        if triple is None:
            record.failures.append(line.strip())
        else:
            record.parsed.append(triple)
    return record


def _ttr_with_status(
    t: Triplet, source: Document, chat: ChatFn, template: PromptTemplate
) -> tuple[str, bool]:
    """Generate a ttr; on empty or failing completions (after one retry) fall
    back to the bare "head relation tail" string. Returns (text, failed)."""
    bare_line = f"{t.head} | {t.relation} | {t.tail}"
    req = template.request(max_tokens=256, document=source.text, triplet=bare_line)
    reply = ""
    for _ in range(2):
        try:
            reply = chat(req).strip()
        except ProviderError as exc:
            log.warning("ttr generation failed for %s: %s", t.bare(), exc)
            reply = ""
        if reply:
            break
    if not reply:
        t.ttr = f"{t.head} {t.relation} {t.tail}"
        return t.ttr, True
    t.ttr = reply
    return reply, False


def generate_ttr(t: Triplet, source: Document, chat: ChatFn, template: PromptTemplate) -> str:
    """Generate and store the textual description of one triplet."""
    if template.id != "ttr":
        raise ValidationError(f"ttr generation needs the ttr template, got {template.id!r}")
    if source.doc_id != t.source_doc_id:
        raise ValidationError(
            f"source document {source.doc_id!r} does not match triplet source {t.source_doc_id!r}"
        )
    text, _ = _ttr_with_status(t, source, chat, template)
    return text


def build_kg(
    corpus: list[Document],
    chat: ChatFn,
    templates: TemplateSet,
    max_chars: int = DEFAULT_MAX_CHARS,
    overlap: int = DEFAULT_OVERLAP,
) -> tuple[KnowledgeGraph, BuildReport]:
    """Chunk, extract, dedup, and describe: the full construction pass.

    A document whose extraction raises a provider error is recorded and
    skipped; the build aborts only when that happens to every document.
    """
    if not corpus:
        raise ValidationError("corpus is empty")
    extract_tpl = templates.get("kg_extract")
    ttr_tpl = templates.get("ttr")
    kg = KnowledgeGraph()
    report = BuildReport(documents=len(corpus))
    chunk_by_id: dict[str, Document] = {}
    parse_failures = 0
    for doc in corpus:
        try:
            for chunk in chunk_corpus(doc, max_chars, overlap):
                chunk_by_id[chunk.doc_id] = chunk
                record = extract_triples(chunk, chat, extract_tpl)
                report.chunks += 1
                report.triples_extracted += len(record.parsed)
                parse_failures += len(record.failures)
                for head, relation, tail in record.parsed:
                    kg.insert(Triplet(head, relation, tail, source_doc_id=chunk.doc_id))
        except ProviderError as exc:
            report.doc_failures[doc.doc_id] = str(exc)
            continue
    if len(report.doc_failures) == len(corpus):
        raise BuildError("extraction failed for every document", report.doc_failures)
    if parse_failures:
        log.info("extraction skipped %d unparseable lines", parse_failures)
    for t in kg.triplets:
        if t.ttr:
            continue
        _, failed = _ttr_with_status(t, chunk_by_id[t.source_doc_id], chat, ttr_tpl)
        if failed:
            report.ttr_failures += 1
    report.dedup_count = report.triples_extracted - len(kg.triplets)
    report.triplets = len(kg.triplets)
    return kg, report
