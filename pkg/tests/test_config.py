import pytest

from kgcqr.config import ALPHA_ENV, load_config
from kgcqr.errors import ConfigError


def _write(tmp_path, text, name="app.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_defaults_from_empty_config(tmp_path, monkeypatch):
    monkeypatch.delenv(ALPHA_ENV, raising=False)
    cfg = load_config(_write(tmp_path, "# nothing but a comment\n\n"))
    assert cfg.provider.base_url == "http://127.0.0.1:8000/v1"
    assert cfg.provider.model == "default"
    assert cfg.provider.embedding_dim == 64
    assert cfg.params.alpha == 0.7
    assert cfg.params.k_complete == 20
    assert cfg.params.beam_width == 3
    assert cfg.params.max_path_len == 3
    assert cfg.params.filter_enabled is True
    assert cfg.server.bind_addr == "127.0.0.1"
    assert cfg.server.port == 8765
    assert cfg.max_inflight == 8


def test_values_parse_and_paths_resolve(tmp_path, monkeypatch):
    monkeypatch.delenv(ALPHA_ENV, raising=False)
    sub = tmp_path / "conf"
    sub.mkdir()
    cfg = load_config(
        _write(
            sub,
            "provider.base_url = http://example:9000/v1\n"
            "provider.timeout = 5.5\n"
            "params.alpha = 0.4\n"
            "params.filter_enabled = off\n"
            "paths.kg = ../data/triplets.jsonl\n"
            "paths.doc_index = /abs/doc.idx\n",
        )
    )
    assert cfg.provider.base_url == "http://example:9000/v1"
    assert cfg.provider.timeout == 5.5
    assert cfg.params.alpha == 0.4
    assert cfg.params.filter_enabled is False
    # relative to the config file's directory, not the cwd
    from pathlib import Path

    assert Path(cfg.paths.kg).resolve() == (tmp_path / "data" / "triplets.jsonl").resolve()
    assert cfg.paths.doc_index == "/abs/doc.idx"


def test_unknown_key_names_the_line(tmp_path):
    p = _write(tmp_path, "provider.model = m\nnot.a.key = 1\n")
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert "not.a.key" in str(err.value)
    assert ":2" in str(err.value)


def test_malformed_line_and_bad_types(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "just some words\n"))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "provider.timeout = soon\n"))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "params.k_extract = 1.5\n"))
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "params.filter_enabled = maybe\n"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_alpha_env_overrides_file(tmp_path, monkeypatch):
    p = _write(tmp_path, "params.alpha = 0.2\n")
    monkeypatch.delenv(ALPHA_ENV, raising=False)
    assert load_config(p).params.alpha == 0.2
    monkeypatch.setenv(ALPHA_ENV, "0.9")
    assert load_config(p).params.alpha == 0.9
    monkeypatch.setenv(ALPHA_ENV, "not-a-number")
    with pytest.raises(ConfigError):
        load_config(p)


def test_duplicate_key_last_wins(tmp_path, monkeypatch):
    monkeypatch.delenv(ALPHA_ENV, raising=False)
    p = _write(tmp_path, "params.alpha = 0.2\nparams.alpha = 0.6\n")
    assert load_config(p).params.alpha == 0.6
