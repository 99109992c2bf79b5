import pytest

from kgcqr.construction import (
    BuildError,
    build_kg,
    chunk_corpus,
    extract_triples,
    generate_ttr,
    parse_triple_line,
)
from kgcqr.errors import ValidationError
from kgcqr.graph import Document, Triplet
from kgcqr.providers import ChatRequest, ProviderHTTPError


def test_short_document_is_one_unchanged_chunk():
    doc = Document("d1", "short enough")
    assert chunk_corpus(doc, max_chars=100, overlap=10) == [doc]


def test_chunk_stride_arithmetic():
    doc = Document("d1", "0123456789")
    chunks = chunk_corpus(doc, max_chars=4, overlap=1)
    assert [c.text for c in chunks] == ["0123", "3456", "6789"]
    assert [c.doc_id for c in chunks] == ["d1#0", "d1#1", "d1#2"]


def test_chunks_reconstruct_text():
    doc = Document("d1", "abcdefghijklmnopqrstuvwxyz" * 3)
    overlap = 5
    chunks = chunk_corpus(doc, max_chars=20, overlap=overlap)
    rebuilt = chunks[0].text + "".join(c.text[overlap:] for c in chunks[1:])
    assert rebuilt == doc.text
    assert all(len(c.text) <= 20 for c in chunks)


def test_chunk_parameter_validation():
    doc = Document("d1", "text")
    with pytest.raises(ValidationError):
        chunk_corpus(doc, max_chars=4, overlap=4)
    with pytest.raises(ValidationError):
        chunk_corpus(doc, max_chars=4, overlap=-1)


@pytest.mark.parametrize(
    "line,expected",
    [
        ("a | r | b", ("a", "r", "b")),
        ("  Alice  Rivera |  founded | Nimbus   Labs ", ("Alice Rivera", "founded", "Nimbus Labs")),
        ("a | b", None),
        ("a | r | b | extra", None),
        ("a |  | b", None),
        ("no pipes here", None),
    ],
)
def test_parse_triple_line(line, expected):
    assert parse_triple_line(line) == expected


def test_extract_triples_collects_bad_lines(templates):
    def chat(req):
        return "a | r | b\n\nnot a triple\nc | r | d\n"

    record = extract_triples(Document("d1", "text"), chat, templates.get("kg_extract"))
    assert record.parsed == [("a", "r", "b"), ("c", "r", "d")]
    assert record.failures == ["not a triple"]


def test_extract_triples_requires_extract_template(templates):
    with pytest.raises(ValidationError):
        extract_triples(Document("d1", "x"), lambda r: "", templates.get("ttr"))


def test_generate_ttr_retries_then_falls_back(templates):
    calls = []

    def flaky(req: ChatRequest) -> str:
        calls.append(req)
        raise ProviderHTTPError(500, "down")

    t = Triplet("a", "made of", "b", source_doc_id="d1")
    text = generate_ttr(t, Document("d1", "src"), flaky, templates.get("ttr"))
    assert text == "a made of b"
    assert t.ttr == "a made of b"
    assert len(calls) == 2  # one retry before the fallback

    t2 = Triplet("a", "r", "b", source_doc_id="d1")
    with pytest.raises(ValidationError):
        generate_ttr(t2, Document("other", "src"), flaky, templates.get("ttr"))


def test_generate_ttr_recovers_on_second_attempt(templates):
    replies = iter(["", "a is part of b."])

    def chat(req):
        return next(replies)

    t = Triplet("a", "part_of", "b", source_doc_id="d1")
    assert generate_ttr(t, Document("d1", "src"), chat, templates.get("ttr")) == "a is part of b."


def test_build_kg_full_pass(corpus, mock_chat, templates):
    kg, report = build_kg(corpus, mock_chat, templates)
    kg.check_invariants()
    assert report.documents == 12
    assert report.chunks == 12  # every fixture doc fits in one chunk
    assert report.triplets == len(kg.triplets)
    assert report.dedup_count == report.triples_extracted - report.triplets
    assert report.dedup_count == 1  # d07 restates one d01 fact
    assert report.ttr_failures == 0
    assert report.doc_failures == {}
    # dedup keeps the first source document
    assert kg.get(("Nimbus Labs", "headquartered_in", "Port Vela")).source_doc_id == "d01"
    # every stored triplet carries a ttr sentence
    assert all(t.ttr for t in kg.triplets)
    assert kg.get(("Alice Rivera", "founded", "Nimbus Labs")).ttr == "Alice Rivera founded Nimbus Labs."


def test_build_kg_skips_failing_documents(templates, mock_chat):
    docs = [Document("ok", "a | r | b"), Document("bad", "boom")]

    def chat(req):
        if req.meta.get("template") == "kg_extract" and "boom" in req.meta.get("document", ""):
            raise ProviderHTTPError(500, "down")
        return mock_chat(req)

    kg, report = build_kg(docs, chat, templates)
    assert list(report.doc_failures) == ["bad"]
    assert len(kg) == 1


def test_build_kg_aborts_when_everything_fails(templates):
    def chat(req):
        raise ProviderHTTPError(500, "down")

    with pytest.raises(BuildError) as err:
        build_kg([Document("d1", "x"), Document("d2", "y")], chat, templates)
    assert set(err.value.failures) == {"d1", "d2"}

    with pytest.raises(ValidationError):
        build_kg([], chat, templates)


def test_build_kg_stamps_chunk_source_ids(templates, mock_chat):
    text_a = "alpha | r | beta"
    filler = "x" * 30
    doc = Document("dd", text_a + "\n" + filler + "\ngamma | r | delta")
    kg, report = build_kg([doc], mock_chat, templates, max_chars=len(text_a) + 1, overlap=0)
    assert report.chunks > 1
    first = kg.get(("alpha", "r", "beta"))
    assert first is not None and first.source_doc_id == "dd#0"
