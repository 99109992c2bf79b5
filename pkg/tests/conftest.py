"""Shared fixtures: the mini corpus, mock providers, a prebuilt graph and
indexes, golden-file comparison, and a config writer for CLI/server tests.

Set KGCQR_REGEN_GOLDEN=1 to rewrite golden files instead of comparing.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from kgcqr.construction import build_kg
from kgcqr.graph import load_corpus
from kgcqr.metrics import load_eval
from kgcqr.mocks import MockEmbeddingProvider, default_mock_chat
from kgcqr.pipeline import PipelineParams, ProviderBundle
from kgcqr.templates import TemplateSet
from kgcqr.vindex import VectorIndex

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES = TESTS_DIR / "fixtures"
GOLDEN = TESTS_DIR / "golden"
TEMPLATES_DIR = TESTS_DIR.parent / "templates"
CORPUS_PATH = FIXTURES / "corpus.jsonl"
EVAL_PATH = FIXTURES / "eval.jsonl"

# All mock-driven tests share one embedding width. 256 keeps hash collisions
# between fixture tokens rare enough that cosine ordering tracks token overlap.
MOCK_DIM = 256

_REGEN = os.environ.get("KGCQR_REGEN_GOLDEN") == "1"


def golden_check(name: str, text: str) -> None:
    path = GOLDEN / name
    if _REGEN:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return
    assert path.is_file(), f"golden file {name} missing; regenerate with KGCQR_REGEN_GOLDEN=1"
    expected = path.read_text(encoding="utf-8")
    assert text == expected, f"output does not match golden {name}"


def write_config(
    path: Path,
    artifacts: Path,
    *,
    dim: int = MOCK_DIM,
    alpha: float = 0.7,
    k_extract: int = 4,
    corpus: Path | None = CORPUS_PATH,
    port: int | None = None,
    extra_lines: list[str] | None = None,
) -> Path:
    lines = [
        "# test runtime config",
        f"provider.embedding_dim = {dim}",
        f"params.alpha = {alpha}",
        f"params.k_extract = {k_extract}",
        f"paths.kg = {artifacts / 'triplets.jsonl'}",
        f"paths.doc_index = {artifacts / 'doc.idx'}",
        f"paths.ttr_index = {artifacts / 'ttr.idx'}",
        f"paths.templates_dir = {TEMPLATES_DIR}",
    ]
    if corpus is not None:
        lines.append(f"paths.corpus = {corpus}")
    if port is not None:
        lines.append(f"server.port = {port}")
    if extra_lines:
        lines.extend(extra_lines)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(CORPUS_PATH)


@pytest.fixture(scope="session")
def eval_records():
    return load_eval(EVAL_PATH)


@pytest.fixture(scope="session")
def templates():
    return TemplateSet.load(TEMPLATES_DIR)


@pytest.fixture(scope="session")
def mock_chat():
    return default_mock_chat().chat


@pytest.fixture(scope="session")
def embed_fn():
    return MockEmbeddingProvider(MOCK_DIM).embed


@pytest.fixture(scope="session")
def built(corpus, mock_chat, templates):
    """(kg, report) from one mock build over the fixture corpus."""
    return build_kg(corpus, mock_chat, templates)


@pytest.fixture(scope="session")
def kg(built):
    return built[0]


@pytest.fixture(scope="session")
def doc_index(corpus, embed_fn):
    ix = VectorIndex(MOCK_DIM)
    for doc, vec in zip(corpus, embed_fn([d.text for d in corpus])):
        ix.add(doc.doc_id, vec)
    return ix


@pytest.fixture(scope="session")
def ttr_index(kg, embed_fn):
    ix = VectorIndex(MOCK_DIM)
    for t, vec in zip(kg.triplets, embed_fn([t.ttr for t in kg.triplets])):
        ix.add(t.key(), vec)
    return ix


@pytest.fixture(scope="session")
def bundle(mock_chat, embed_fn, templates):
    return ProviderBundle(chat=mock_chat, embed=embed_fn, templates=templates)


@pytest.fixture(scope="session")
def fixture_params():
    return PipelineParams(k_extract=4, k_complete=20, max_path_len=3, beam_width=3, alpha=0.7)


@pytest.fixture(scope="session")
def cli_artifacts(tmp_path_factory):
    """Run build-kg and index once; yields (artifacts_dir, config_path)."""
    from kgcqr.cli import main

    root = tmp_path_factory.mktemp("cli_artifacts")
    art = root / "art"
    art.mkdir()
    cfg = write_config(root / "kgcqr.cfg", art)
    rc = main(
        ["build-kg", "--corpus", str(CORPUS_PATH), "--out", str(art), "--config", str(cfg), "--mock"]
    )
    assert rc == 0
    rc = main(
        [
            "index",
            "--kg",
            str(art),
            "--corpus",
            str(CORPUS_PATH),
            "--out",
            str(art),
            "--config",
            str(cfg),
            "--mock",
        ]
    )
    assert rc == 0
    return art, cfg
