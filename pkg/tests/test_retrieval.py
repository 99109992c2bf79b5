import math

import numpy as np
import pytest

from kgcqr.errors import ValidationError
from kgcqr.graph import Document, Subgraph
from kgcqr.pipeline import ContextResult, fuse
from kgcqr.providers import ProviderResponseError
from kgcqr.retrieval import (
    BM25_B,
    BM25_K1,
    RankedResult,
    bm25_build,
    bm25_search,
    dense_retrieve,
    hyde_retrieve,
    sparse_cqr_retrieve,
    tokenize,
)

# Hand-derived Okapi scores for the 3-doc corpus below (k1=1.2, b=0.75,
# N=3, avgdl=7/3):
#   "a": df=1, idf=ln(2.5/1.5); d1 tf=2 dl=3 -> tf_term=2*2.2/(2+1.2*17/14)=14/11
#   "d": df=1, idf=ln(2.5/1.5); d3 tf=1 dl=2 -> tf_term=1*2.2/(1+1.2*25/28)=154/145
#   "b", "c": df=2, idf=ln(1.5/2.5)<0 -> clamped to 0
_CORPUS = [Document("d1", "a a b"), Document("d2", "b c"), Document("d3", "c d")]
_IDF_RARE = math.log(2.5 / 1.5)


def test_bm25_parameters_are_okapi_defaults():
    assert BM25_K1 == 1.2
    assert BM25_B == 0.75


def test_tokenize_lowercases_and_splits():
    assert tokenize("Alice-Rivera founded; NIMBUS Labs!") == [
        "alice", "rivera", "founded", "nimbus", "labs",
    ]
    assert tokenize("...") == []


def test_bm25_hand_computed_scores():
    ix = bm25_build(_CORPUS)
    got = ix.search("a", top_n=5)
    assert [d for d, _ in got] == ["d1"]
    assert got[0][1] == pytest.approx((14 / 11) * _IDF_RARE, abs=1e-12)

    got = ix.search("c d", top_n=5)  # "c" idf clamps to 0, "d" decides alone
    assert [d for d, _ in got] == ["d3"]
    assert got[0][1] == pytest.approx((154 / 145) * _IDF_RARE, abs=1e-12)


def test_bm25_negative_idf_clamps_to_zero():
    ix = bm25_build(_CORPUS)
    # "b" appears in 2 of 3 docs: idf = ln(1.5/2.5) < 0 -> clamped -> no hits
    assert ix.idf("b") == 0.0
    assert ix.search("b", top_n=5) == []


def test_bm25_query_terms_count_per_occurrence():
    ix = bm25_build(_CORPUS)
    single = ix.search("a", top_n=5)[0][1]
    double = ix.search("a a", top_n=5)[0][1]
    assert double == pytest.approx(2 * single, abs=1e-12)


def test_bm25_empty_and_absent_queries():
    ix = bm25_build(_CORPUS)
    assert ix.search("", top_n=5) == []
    assert ix.search("zzz", top_n=5) == []
    with pytest.raises(ValidationError):
        ix.search("a", top_n=0)
    with pytest.raises(ValidationError):
        bm25_build([])


def test_bm25_tie_break_ascending_doc_id():
    # three fillers keep df("apple") below N/2 so its idf stays positive
    docs = [
        Document("z", "apple pie"),
        Document("a", "apple pie"),
        Document("m", "plum jam"),
        Document("n", "rye bread"),
        Document("o", "oat cake"),
    ]
    got = bm25_build(docs).search("apple", top_n=5)
    assert [d for d, _ in got] == ["a", "z"]
    assert got[0][1] == got[1][1]


def test_bm25_search_wrapper_sets_query_id():
    ix = bm25_build(_CORPUS)
    res = bm25_search(ix, "a", top_n=5, query_id="q9")
    assert res.query_id == "q9"
    assert res.doc_ids() == ["d1"]


def test_ranked_result_invariants():
    RankedResult("q", [("d1", 2.0), ("d2", 2.0), ("d3", 1.0)])
    with pytest.raises(ValidationError):
        RankedResult("q", [("d1", 1.0), ("d1", 0.5)])
    with pytest.raises(ValidationError):
        RankedResult("q", [("d1", 1.0), ("d2", 2.0)])


def _ctx(fused):
    return ContextResult("ctx text", Subgraph(), np.asarray(fused, dtype=np.float64), {})


def test_dense_retrieve_plain_and_fused(doc_index, embed_fn):
    query = "Who founded Coral Systems?"
    plain = dense_retrieve(query, None, doc_index, embed_fn, 12, query_id="q")
    assert plain.query_id == "q"
    assert len(plain.ranking) == 12

    # a context whose fused vector is the query embedding changes nothing
    v_q = embed_fn([query])[0]
    same = dense_retrieve(query, _ctx(np.asarray(v_q.values, np.float64)), doc_index, embed_fn, 12)
    assert same.ranking == plain.ranking

    # alpha=0 equals searching with the context vector alone
    v_ctx = embed_fn(["Dana Moss founded Coral Systems."])[0]
    fused0 = dense_retrieve(query, _ctx(fuse(v_q, v_ctx, 0.0)), doc_index, embed_fn, 12)
    ctx_only = dense_retrieve("ignored", _ctx(np.asarray(v_ctx.values, np.float64)), doc_index, embed_fn, 12)
    assert fused0.ranking == ctx_only.ranking


def test_sparse_cqr_degenerates_without_context():
    ix = bm25_build(_CORPUS)
    assert sparse_cqr_retrieve("a", "", ix, 5).ranking == ix.search("a", 5)


def test_sparse_cqr_context_terms_help():
    docs = [
        Document("gold", "skyweave handles weather routing for ships"),
        Document("noise", "weather routing weather routing services"),
        Document("f1", "plums and quinces"),
        Document("f2", "granite archive records"),
        Document("f3", "tide museum exhibits"),
    ]
    ix = bm25_build(docs)
    plain = sparse_cqr_retrieve("weather routing product", "", ix, 5)
    enriched = sparse_cqr_retrieve("weather routing product", "skyweave ships", ix, 5)
    assert plain.doc_ids()[0] == "noise"  # term repetition wins a lexical tie
    assert enriched.doc_ids()[0] == "gold"
    assert enriched.doc_ids().index("gold") <= plain.doc_ids().index("gold")


def test_sparse_cqr_unknown_context_terms_are_inert():
    ix = bm25_build(_CORPUS)
    assert sparse_cqr_retrieve("a", "qqq www", ix, 5).ranking == ix.search("a", 5)


def test_hyde_echo_mock_equals_plain_dense(doc_index, embed_fn, mock_chat, templates):
    query = "Who acquired Glowfern Analytics?"
    hyde = hyde_retrieve(query, mock_chat, embed_fn, doc_index, 12, templates.get("hyde"))
    plain = dense_retrieve(query, None, doc_index, embed_fn, 12)
    # the mock hypothetical document is the query itself
    assert hyde.ranking == plain.ranking


def test_hyde_empty_generation_is_an_error(doc_index, embed_fn, templates):
    with pytest.raises(ProviderResponseError):
        hyde_retrieve("q", lambda req: "  ", embed_fn, doc_index, 5, templates.get("hyde"))
    with pytest.raises(ValidationError):
        hyde_retrieve("q", lambda req: "x", embed_fn, doc_index, 5, templates.get("filter"))
