"""Knowledge graph core: entities, triplets, the graph store, and JSONL persistence.

The graph is directed. Each triplet carries a textual description (its
"ttr") and the id of the document it was extracted from. Bare triples
(head, relation, tail) are unique within a graph; traversal follows edge
direction only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Iterator

from .errors import ParseError, ValidationError

TRIPLETS_FILENAME = "triplets.jsonl"


def canonical_id(raw: str) -> str:
    """Canonicalize an entity id: trim and collapse internal whitespace."""
    return " ".join(raw.split())


@dataclass(frozen=True)
class Entity:
    """A graph node. Identity is the canonical id; label is display-only."""

    id: str
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not self.id.strip():
            raise ValidationError("entity id is empty")
        object.__setattr__(self, "id", canonical_id(self.id))
        if not self.label:
            object.__setattr__(self, "label", self.id)


@dataclass
class Triplet:
    """A directed (head, relation, tail) fact with its textual description."""

    head: str
    relation: str
    tail: str
    ttr: str = ""
    source_doc_id: str = ""

    def __post_init__(self) -> None:
        self.head = canonical_id(self.head)
        self.relation = canonical_id(self.relation)
        self.tail = canonical_id(self.tail)
        if not self.head:
            raise ValidationError("triplet head is empty")
        if not self.tail:
            raise ValidationError("triplet tail is empty")
        if not self.relation:
            raise ValidationError("triplet relation is empty")

    def bare(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)

    def key(self) -> str:
        """Canonical string key. Components never contain tabs after
        canonicalization, so the join is unambiguous."""
        return f"{self.head}\t{self.relation}\t{self.tail}"

    def as_line(self, with_ttr: bool = False) -> str:
        """Pipe-separated rendering used by prompts."""
        base = f"{self.head} | {self.relation} | {self.tail}"
        return f"{base} | {self.ttr}" if with_ttr else base

    def to_record(self) -> dict:
        return {
            "head": self.head,
            "relation": self.relation,
            "tail": self.tail,
            "ttr": self.ttr,
            "source_doc_id": self.source_doc_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Triplet":
        for k in ("head", "relation", "tail"):
            if k not in rec:
                raise ValidationError(f'missing "{k}"')
        return cls(
            head=rec["head"],
            relation=rec["relation"],
            tail=rec["tail"],
            ttr=rec.get("ttr", ""),
            source_doc_id=rec.get("source_doc_id", ""),
        )


@dataclass
class Document:
    """A corpus document."""

    doc_id: str
    text: str
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValidationError("document id is empty")
        if not self.text:
            raise ValidationError(f"document {self.doc_id!r} has empty text")


class KnowledgeGraph:
    """Directed triple store with an adjacency index keyed by head entity.

    Construction is single-writer; once built the graph is treated as
    immutable and is safe for concurrent readers.
    """

    def __init__(self) -> None:
        self.entities: dict[str, Entity] = {}
        self.relations: set[str] = set()
        self.triplets: list[Triplet] = []
        self.out_index: dict[str, list[int]] = {}
        self._bare: dict[tuple[str, str, str], int] = {}

    def __len__(self) -> int:
        return len(self.triplets)

    def insert(self, t: Triplet) -> "KnowledgeGraph":
        """Insert a triplet. Duplicate bare triples merge: the existing ttr
        is kept if non-empty, otherwise replaced by the incoming one."""
        existing = self._bare.get(t.bare())
        if existing is not None:
            if not self.triplets[existing].ttr and t.ttr:
                self.triplets[existing].ttr = t.ttr
            return self
        idx = len(self.triplets)
        self.triplets.append(t)
        self._bare[t.bare()] = idx
        self.entities.setdefault(t.head, Entity(t.head))
        self.entities.setdefault(t.tail, Entity(t.tail))
        self.relations.add(t.relation)
        self.out_index.setdefault(t.head, []).append(idx)
        return self

    def neighbors(self, head: str) -> list[Triplet]:
        """Outgoing triplets of ``head`` in insertion order; unknown head is
        legal and yields an empty list."""
        return [self.triplets[i] for i in self.out_index.get(head, ())]

    def contains_bare(self, bare: tuple[str, str, str]) -> bool:
        return bare in self._bare

    def get(self, bare: tuple[str, str, str]) -> Triplet | None:
        idx = self._bare.get(bare)
        return self.triplets[idx] if idx is not None else None

    def save(self, path: str | FsPath) -> None:
        path = FsPath(path)
        with path.open("w", encoding="utf-8") as fh:
            for t in self.triplets:
                fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | FsPath) -> "KnowledgeGraph":
        kg = cls()
        path = FsPath(path)
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    t = Triplet.from_record(rec)
                except (json.JSONDecodeError, ValidationError, TypeError) as exc:
                    raise ParseError(str(exc), path=str(path), line=lineno) from exc
                kg.insert(t)
        return kg

    def check_invariants(self) -> None:
        """Raise if structural invariants are violated (test support)."""
        for t in self.triplets:
            if t.head not in self.entities or t.tail not in self.entities:
                raise ValidationError(f"dangling entity in {t.bare()}")
        n_indexed = sum(len(v) for v in self.out_index.values())
        if n_indexed != len(self.triplets):
            raise ValidationError("out_index does not cover the triplet list")
        if len(self._bare) != len(self.triplets):
            raise ValidationError("duplicate bare triples present")
        for head, idxs in self.out_index.items():
            for i in idxs:
                if self.triplets[i].head != head:
                    raise ValidationError(f"out_index[{head!r}] points at a foreign triplet")


def save_corpus(docs: Iterable[Document], path: str | FsPath) -> None:
    with FsPath(path).open("w", encoding="utf-8") as fh:
        for d in docs:
            rec: dict = {"doc_id": d.doc_id, "text": d.text}
            if d.meta:
                rec["meta"] = d.meta
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_corpus(path: str | FsPath) -> list[Document]:
    """Load corpus.jsonl; duplicate doc_ids or malformed lines raise with the
    line number."""
    docs: list[Document] = []
    seen: set[str] = set()
    path = FsPath(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if "doc_id" not in rec or "text" not in rec:
                    raise ValidationError('record needs "doc_id" and "text"')
                doc = Document(rec["doc_id"], rec["text"], rec.get("meta") or {})
            except (json.JSONDecodeError, ValidationError, TypeError) as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from exc
            if doc.doc_id in seen:
                raise ParseError(f"duplicate doc_id {doc.doc_id!r}", path=str(path), line=lineno)
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


@dataclass
class SubgraphEntry:
    triplet: Triplet
    score: float | None = None


class Subgraph:
    """An ordered set of triplets with optional relevance scores.

    Scored entries appear sorted by score descending; unscored entries
    (score None) follow them.
    """

    def __init__(self, entries: Iterable[SubgraphEntry] = ()) -> None:
        self.entries: list[SubgraphEntry] = list(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[SubgraphEntry]:
        return iter(self.entries)

    def triplets(self) -> list[Triplet]:
        return [e.triplet for e in self.entries]

    def bare_set(self) -> set[tuple[str, str, str]]:
        return {e.triplet.bare() for e in self.entries}

    def entity_ids(self) -> list[str]:
        """Entity ids in first-appearance order (head before tail, per entry)."""
        out: list[str] = []
        seen: set[str] = set()
        for e in self.entries:
            for ent in (e.triplet.head, e.triplet.tail):
                if ent not in seen:
                    seen.add(ent)
                    out.append(ent)
        return out

    def validate(self, kg: KnowledgeGraph | None = None) -> None:
        scores = [e.score for e in self.entries if e.score is not None]
        if any(s2 > s1 + 1e-12 for s1, s2 in zip(scores, scores[1:])):
            raise ValidationError("scored subgraph entries are not sorted descending")
        if kg is not None:
            for e in self.entries:
                if not kg.contains_bare(e.triplet.bare()):
                    raise ValidationError(f"subgraph triplet {e.triplet.bare()} not in graph")


@dataclass
class Path:
    """A directed path: consecutive edges chain tail->head and no entity is
    entered twice (the source never reappears)."""

    edges: list[Triplet]

    def __post_init__(self) -> None:
        if not self.edges:
            raise ValidationError("path has no edges")
        visited = {self.edges[0].head}
        for prev, nxt in zip(self.edges, self.edges[1:]):
            if prev.tail != nxt.head:
                raise ValidationError("path edges do not chain")
        for e in self.edges:
            if e.tail in visited:
                raise ValidationError(f"path revisits entity {e.tail!r}")
            visited.add(e.tail)

    def __len__(self) -> int:
        return len(self.edges)

    def source(self) -> str:
        return self.edges[0].head

    def target(self) -> str:
        return self.edges[-1].tail

    def entity_ids(self) -> list[str]:
        return [self.edges[0].head] + [e.tail for e in self.edges]

    def edge_keys(self) -> tuple[tuple[str, str, str], ...]:
        return tuple(e.bare() for e in self.edges)
