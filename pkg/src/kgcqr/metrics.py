"""IR metrics (average precision, recall at k) and evaluation records.

Relevance is binary. Documents missing from a ranking contribute zero to
every metric. mAP is the unweighted mean of per-query average precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError, ValidationError
from .retrieval import RankedResult


@dataclass
class EvalRecord:
    query_id: str
    query: str
    relevant_doc_ids: set[str]

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValidationError("eval record has empty query_id")
        if not self.query:
            raise ValidationError(f"eval record {self.query_id!r} has empty query")
        self.relevant_doc_ids = set(self.relevant_doc_ids)
        if not self.relevant_doc_ids:
            raise ValidationError(f"eval record {self.query_id!r} has no relevant documents")


def load_eval(path: str | Path) -> list[EvalRecord]:
    """Read eval.jsonl (query_id, query, relevant_doc_ids per line)."""
    records: list[EvalRecord] = []
    seen: set[str] = set()
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                for k in ("query_id", "query", "relevant_doc_ids"):
                    if k not in rec:
                        raise ValidationError(f'missing "{k}"')
                record = EvalRecord(rec["query_id"], rec["query"], set(rec["relevant_doc_ids"]))
            except (json.JSONDecodeError, ValidationError, TypeError) as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from exc
            if record.query_id in seen:
                raise ParseError(
                    f"duplicate query_id {record.query_id!r}", path=str(path), line=lineno
                )
            seen.add(record.query_id)
            records.append(record)
    return records


def average_precision(ranking: Sequence[str], relevant: Iterable[str]) -> float:
    """Mean of precision-at-hit over the relevant documents' ranks, divided
    by the total number of relevant documents."""
    relevant = set(relevant)
    if not relevant:
        raise ValidationError("relevant set is empty")
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranking, start=1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def recall_at_k(ranking: Sequence[str], relevant: Iterable[str], k: int) -> float:
    relevant = set(relevant)
    if not relevant:
        raise ValidationError("relevant set is empty")
    if k <= 0:
        raise ValidationError("k must be positive")
    return len(set(ranking[:k]) & relevant) / len(relevant)


@dataclass
class MetricsReport:
    map: float
    recall_at: dict[int, float]
    n_queries: int
    per_query: list[dict] | None = None

    def to_dict(self) -> dict:
        out: dict = {"map": self.map, "n_queries": self.n_queries}
        for k in sorted(self.recall_at):
            out[f"recall@{k}"] = self.recall_at[k]
        if self.per_query is not None:
            out["per_query"] = self.per_query
        return out


DEFAULT_KS = (5, 10, 25)


def evaluate(
    results: Sequence[RankedResult],
    records: Sequence[EvalRecord],
    ks: Sequence[int] = DEFAULT_KS,
    include_per_query: bool = False,
) -> MetricsReport:
    """Aggregate metrics over a query set; results are matched to records by
    query_id and every record must have one."""
    if not records:
        raise ValidationError("no eval records")
    by_id = {r.query_id: r for r in results}
    if len(by_id) != len(results):
        raise ValidationError("duplicate query_id among results")
    ap_sum = 0.0
    recall_sums = {k: 0.0 for k in ks}
    per_query: list[dict] = []
    for record in records:
        result = by_id.get(record.query_id)
        if result is None:
            raise ValidationError(f"no result for query {record.query_id!r}")
        ids = result.doc_ids()
        ap = average_precision(ids, record.relevant_doc_ids)
        ap_sum += ap
        row = {"query_id": record.query_id, "ap": ap}
        for k in ks:
            r = recall_at_k(ids, record.relevant_doc_ids, k)
            recall_sums[k] += r
            row[f"recall@{k}"] = r
        per_query.append(row)
    n = len(records)
    return MetricsReport(
        map=ap_sum / n,
        recall_at={k: recall_sums[k] / n for k in ks},
        n_queries=n,
        per_query=per_query if include_per_query else None,
    )


def write_metrics(report: MetricsReport, path: str | Path) -> None:
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
    Path(path).write_text(payload + "\n", encoding="utf-8")
