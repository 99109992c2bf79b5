import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcqr.errors import ParseError, ValidationError
from kgcqr.metrics import (
    DEFAULT_KS,
    EvalRecord,
    average_precision,
    evaluate,
    load_eval,
    recall_at_k,
    write_metrics,
)
from kgcqr.retrieval import RankedResult


def test_ap_hand_computed_cases():
    assert average_precision(["d1"], {"d1"}) == 1.0
    # hits at ranks 1 and 3 over two relevant docs
    assert average_precision(["d1", "x", "d2"], {"d1", "d2"}) == pytest.approx(
        (1 / 1 + 2 / 3) / 2, abs=1e-15
    )
    assert average_precision(["x", "y"], {"d1"}) == 0.0
    # a missing relevant doc still divides the denominator
    assert average_precision(["d1"], {"d1", "d2"}) == 0.5
    with pytest.raises(ValidationError):
        average_precision(["d1"], set())


def test_recall_at_k_cases():
    assert recall_at_k(["d1", "x", "d2"], {"d1", "d2"}, 1) == 0.5
    assert recall_at_k(["d1", "x", "d2"], {"d1", "d2"}, 3) == 1.0
    assert recall_at_k(["x", "y", "z"], {"d1"}, 25) == 0.0
    with pytest.raises(ValidationError):
        recall_at_k(["d1"], set(), 5)
    with pytest.raises(ValidationError):
        recall_at_k(["d1"], {"d1"}, 0)


def _reference_metrics(results, records, ks):
    """Independent aggregation written from the metric definitions."""
    ap_total = 0.0
    recall_totals = dict.fromkeys(ks, 0.0)
    by_id = {r.query_id: r for r in results}
    for rec in records:
        ids = by_id[rec.query_id].doc_ids()
        precisions = []
        hits = 0
        for i, d in enumerate(ids):
            if d in rec.relevant_doc_ids:
                hits += 1
                precisions.append(hits / (i + 1))
        ap_total += sum(precisions) / len(rec.relevant_doc_ids)
        for k in ks:
            found = sum(1 for d in ids[:k] if d in rec.relevant_doc_ids)
            recall_totals[k] += found / len(rec.relevant_doc_ids)
    n = len(records)
    return ap_total / n, {k: v / n for k, v in recall_totals.items()}


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_evaluate_matches_reference_implementation(seed):
    import numpy as np

    rng = np.random.default_rng(seed)
    docs = [f"d{i}" for i in range(30)]
    records = []
    results = []
    for qi in range(int(rng.integers(1, 6))):
        relevant = set(rng.choice(docs, size=int(rng.integers(1, 4)), replace=False))
        records.append(EvalRecord(f"q{qi}", "text", relevant))
        n_ranked = int(rng.integers(0, 30))
        ranked_ids = list(rng.choice(docs, size=n_ranked, replace=False))
        scores = sorted((float(s) for s in rng.normal(size=n_ranked)), reverse=True)
        results.append(RankedResult(f"q{qi}", list(zip(ranked_ids, scores))))

    report = evaluate(results, records, ks=DEFAULT_KS)
    ref_map, ref_recalls = _reference_metrics(results, records, DEFAULT_KS)
    assert report.map == pytest.approx(ref_map, abs=1e-12)
    for k in DEFAULT_KS:
        assert report.recall_at[k] == pytest.approx(ref_recalls[k], abs=1e-12)
    assert report.n_queries == len(records)


def test_evaluate_requires_complete_results():
    records = [EvalRecord("q1", "t", {"d1"})]
    with pytest.raises(ValidationError):
        evaluate([], records)
    with pytest.raises(ValidationError):
        evaluate([RankedResult("q1", []), RankedResult("q1", [])], records)
    with pytest.raises(ValidationError):
        evaluate([RankedResult("q1", [])], [])


def test_evaluate_per_query_rows():
    records = [EvalRecord("q1", "t", {"d1"}), EvalRecord("q2", "t", {"d9"})]
    results = [RankedResult("q1", [("d1", 1.0)]), RankedResult("q2", [("d2", 1.0)])]
    report = evaluate(results, records, include_per_query=True)
    assert report.map == pytest.approx(0.5)
    assert [row["query_id"] for row in report.per_query] == ["q1", "q2"]
    assert report.per_query[0]["ap"] == 1.0
    assert report.per_query[1]["ap"] == 0.0
    assert evaluate(results, records).per_query is None


def test_metrics_json_shape(tmp_path):
    records = [EvalRecord("q1", "t", {"d1"})]
    results = [RankedResult("q1", [("d1", 1.0)])]
    out = tmp_path / "metrics.json"
    write_metrics(evaluate(results, records), out)
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload == {
        "map": 1.0,
        "n_queries": 1,
        "recall@5": 1.0,
        "recall@10": 1.0,
        "recall@25": 1.0,
    }
    # stable formatting: sorted keys, two-space indent, trailing newline
    text = out.read_text(encoding="utf-8")
    assert text.endswith("}\n")
    assert '  "map"' in text


def test_load_eval_validates(tmp_path):
    path = tmp_path / "eval.jsonl"
    path.write_text(
        '{"query_id": "q1", "query": "a", "relevant_doc_ids": ["d1"]}\n'
        '{"query_id": "q1", "query": "b", "relevant_doc_ids": ["d2"]}\n',
        encoding="utf-8",
    )
    with pytest.raises(ParseError) as err:
        load_eval(path)
    assert err.value.line == 2

    path.write_text('{"query_id": "q1", "query": "a"}\n', encoding="utf-8")
    with pytest.raises(ParseError):
        load_eval(path)

    path.write_text('{"query_id": "q1", "query": "a", "relevant_doc_ids": []}\n', encoding="utf-8")
    with pytest.raises(ParseError):
        load_eval(path)


def test_load_eval_fixture(eval_records):
    assert [r.query_id for r in eval_records] == ["q1", "q2", "q3", "q4", "q5", "q6"]
    assert all(r.relevant_doc_ids for r in eval_records)
