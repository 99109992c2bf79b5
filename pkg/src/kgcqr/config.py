"""Application configuration: a flat key-value file with dotted keys.

Lines look like ``provider.base_url = http://host:8000/v1``; blank lines and
lines starting with ``#`` are ignored. Relative paths are resolved against
the config file's directory. Precedence, highest first: CLI flag,
environment variable (KGCQR_API_KEY, KGCQR_ALPHA), config file, built-in
default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .pipeline import PipelineParams
from .providers import ProviderConfig

ALPHA_ENV = "KGCQR_ALPHA"

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}

KNOWN_KEYS = {
    "provider.base_url",
    "provider.model",
    "provider.embed_model",
    "provider.api_key",
    "provider.timeout",
    "provider.max_retries",
    "provider.embedding_dim",
    "provider.max_inflight",
    "params.k_extract",
    "params.k_complete",
    "params.max_path_len",
    "params.beam_width",
    "params.alpha",
    "params.filter_enabled",
    "paths.kg",
    "paths.doc_index",
    "paths.ttr_index",
    "paths.templates_dir",
    "paths.corpus",
    "server.bind_addr",
    "server.port",
}


@dataclass
class PathsConfig:
    kg: str = ""
    doc_index: str = ""
    ttr_index: str = ""
    templates_dir: str = ""
    corpus: str = ""


@dataclass
class ServerConfig:
    bind_addr: str = "127.0.0.1"
    port: int = 8765


@dataclass
class AppConfig:
    provider: ProviderConfig
    params: PipelineParams = field(default_factory=PipelineParams)
    paths: PathsConfig = field(default_factory=PathsConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    max_inflight: int = 8


def _parse_pairs(path: Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        pairs[key] = value.strip()
    return pairs


def _to_int(pairs: dict, key: str, default: int) -> int:
    if key not in pairs:
        return default
    try:
        return int(pairs[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {pairs[key]!r}") from None


def _to_float(pairs: dict, key: str, default: float) -> float:
    if key not in pairs:
        return default
    try:
        return float(pairs[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {pairs[key]!r}") from None


def _to_bool(pairs: dict, key: str, default: bool) -> bool:
    if key not in pairs:
        return default
    value = pairs[key].lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ConfigError(f"{key} must be a boolean, got {pairs[key]!r}")


def _resolve(base: Path, value: str) -> str:
    if not value:
        return value
    p = Path(value)
    return str(p if p.is_absolute() else (base / p))


def load_config(path: str | Path) -> AppConfig:
    """Parse a config file and apply environment overrides."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    pairs = _parse_pairs(path)
    base = path.parent
    provider = ProviderConfig(
        base_url=pairs.get("provider.base_url", "http://127.0.0.1:8000/v1"),
        model=pairs.get("provider.model", "default"),
        embed_model=pairs.get("provider.embed_model") or None,
        api_key=pairs.get("provider.api_key") or None,
        timeout=_to_float(pairs, "provider.timeout", 30.0),
        max_retries=_to_int(pairs, "provider.max_retries", 3),
        embedding_dim=_to_int(pairs, "provider.embedding_dim", 64),
    )
    alpha = _to_float(pairs, "params.alpha", 0.7)
    env_alpha = os.environ.get(ALPHA_ENV)
    if env_alpha is not None:
        try:
            alpha = float(env_alpha)
        except ValueError:
            raise ConfigError(f"{ALPHA_ENV} must be a number, got {env_alpha!r}") from None
    params = PipelineParams(
        k_extract=_to_int(pairs, "params.k_extract", 20),
        k_complete=_to_int(pairs, "params.k_complete", 20),
        max_path_len=_to_int(pairs, "params.max_path_len", 3),
        beam_width=_to_int(pairs, "params.beam_width", 3),
        alpha=alpha,
        filter_enabled=_to_bool(pairs, "params.filter_enabled", True),
    )
    paths = PathsConfig(
        kg=_resolve(base, pairs.get("paths.kg", "")),
        doc_index=_resolve(base, pairs.get("paths.doc_index", "")),
        ttr_index=_resolve(base, pairs.get("paths.ttr_index", "")),
        templates_dir=_resolve(base, pairs.get("paths.templates_dir", "")),
        corpus=_resolve(base, pairs.get("paths.corpus", "")),
    )
    server = ServerConfig(
        bind_addr=pairs.get("server.bind_addr", "127.0.0.1"),
        port=_to_int(pairs, "server.port", 8765),
    )
    return AppConfig(
        provider=provider,
        params=params,
        paths=paths,
        server=server,
        max_inflight=_to_int(pairs, "provider.max_inflight", 8),
    )
