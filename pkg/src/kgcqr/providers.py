"""Chat-completion and embedding provider contracts plus the HTTP wire client.

The wire protocol is OpenAI-compatible JSON over HTTP:

    POST {base_url}/chat/completions
        {"model": ..., "messages": [{"role": ..., "content": ...}],
         "temperature": ..., "max_tokens": ...}
    POST {base_url}/embeddings
        {"model": ..., "input": [...]}

Every embedding crossing the provider boundary is L2-normalized, so dot
product equals cosine everywhere downstream. Timeouts and 5xx responses are
retried with exponential backoff; 4xx responses never are.
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import requests

from .errors import ConfigError, KgcqrError, ValidationError

log = logging.getLogger(__name__)

API_KEY_ENV = "KGCQR_API_KEY"
UNIT_NORM_TOL = 1e-6

# Module-level knobs; tests shrink the backoff, operators may widen the limiter.
BACKOFF_BASE_S = 0.25
BACKOFF_CAP_S = 8.0
_limiter = threading.BoundedSemaphore(8)


def set_max_inflight(n: int) -> None:
    """Bound the number of concurrent requests to external providers."""
    global _limiter
    if n < 1:
        raise ConfigError("max inflight requests must be >= 1")
    _limiter = threading.BoundedSemaphore(n)


class ProviderError(KgcqrError):
    """Base class for provider failures."""


class ProviderTimeout(ProviderError):
    """The provider did not answer within the configured timeout."""


class ProviderHTTPError(ProviderError):
    """Non-2xx response; carries the HTTP status."""

    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"HTTP {status}" + (f": {message}" if message else ""))


class ProviderAuthError(ProviderHTTPError):
    """401/403 from the provider; never retried."""


class ProviderResponseError(ProviderError):
    """2xx response whose body does not match the wire contract."""


@dataclass
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024
    # Mock-dispatch metadata (template id, placeholder values). Ignored by
    # the wire client; never serialized.
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.user_prompt:
            raise ValidationError("chat request has empty user prompt")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")


class EmbeddingVector:
    """Fixed-dimension unit vector (float32 storage, finite components)."""

    __slots__ = ("values", "dim")

    def __init__(self, values: np.ndarray | Sequence[float]):
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding has non-finite components")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"embedding norm {norm} is not 1 within {UNIT_NORM_TOL}")
        self.values = arr
        self.dim = int(arr.size)

    @classmethod
    def normalized(cls, values: Sequence[float] | np.ndarray) -> "EmbeddingVector":
        """Build a unit vector from raw values (normalized in float64)."""
        arr = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if not math.isfinite(norm) or norm == 0.0:
            raise ValidationError("cannot normalize a zero or non-finite vector")
        return cls((arr / norm).astype(np.float32))

    def dot(self, other: "EmbeddingVector") -> float:
        return float(self.values.astype(np.float64) @ other.values.astype(np.float64))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, EmbeddingVector)
            and self.dim == other.dim
            and bool(np.array_equal(self.values, other.values))
        )

    def __repr__(self) -> str:
        return f"EmbeddingVector(dim={self.dim})"


@dataclass
class ProviderConfig:
    base_url: str
    model: str
    embedding_dim: int
    api_key: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    embed_model: str | None = None

    def __post_init__(self) -> None:
        if self.embedding_dim <= 0:
            raise ConfigError("embedding_dim must be positive")
        if not (0 <= self.max_retries <= 10):
            raise ConfigError("max_retries must be in [0, 10]")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    def resolved_api_key(self) -> str | None:
        return os.environ.get(API_KEY_ENV) or self.api_key


# Callable aliases used throughout the pipeline.
ChatFn = Callable[[ChatRequest], str]
EmbedFn = Callable[[Sequence[str]], "list[EmbeddingVector]"]

_EMBED_BATCH = 128


def _retryable(exc: ProviderError) -> bool:
    if isinstance(exc, ProviderAuthError):
        return False
    if isinstance(exc, ProviderHTTPError):
        return exc.status >= 500
    return isinstance(exc, (ProviderTimeout, _TransientConnectionError))


class _TransientConnectionError(ProviderError):
    pass


class OpenAICompatClient:
    """Shareable wire client for one provider endpoint."""

    def __init__(self, cfg: ProviderConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self._session = session or requests.Session()

    # -- low-level ----------------------------------------------------------

    def _post(self, route: str, payload: dict) -> dict:
        url = self.cfg.base_url.rstrip("/") + route
        headers = {"Content-Type": "application/json"}
        key = self.cfg.resolved_api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        with _limiter:
            try:
                resp = self._session.post(
                    url, json=payload, headers=headers, timeout=self.cfg.timeout
                )
            except requests.Timeout as exc:
                raise ProviderTimeout(str(exc)) from exc
            except requests.ConnectionError as exc:
                raise _TransientConnectionError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise ProviderAuthError(resp.status_code, "authentication failed")
        if not (200 <= resp.status_code < 300):
            raise ProviderHTTPError(resp.status_code, resp.text[:200])
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProviderResponseError(f"response is not JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise ProviderResponseError("response body is not a JSON object")
        return body

    def _post_with_retries(self, route: str, payload: dict) -> dict:
        attempt = 0
        while True:
            try:
                return self._post(route, payload)
            except ProviderError as exc:
                if not _retryable(exc) or attempt >= self.cfg.max_retries:
                    raise
                delay = min(BACKOFF_BASE_S * (2**attempt), BACKOFF_CAP_S)
                log.warning("provider call failed (%s); retry %d in %.2fs", exc, attempt + 1, delay)
                time.sleep(delay)
                attempt += 1

    # -- public surface -----------------------------------------------------

    def chat(self, req: ChatRequest) -> str:
        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.append({"role": "user", "content": req.user_prompt})
        body = self._post_with_retries(
            "/chat/completions",
            {
                "model": self.cfg.model,
                "messages": messages,
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
            },
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderResponseError(f"missing choices/message/content: {exc}") from exc
        if not isinstance(content, str):
            raise ProviderResponseError("completion content is not a string")
        return content

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValidationError("embed called with an empty text list")
        out: list[EmbeddingVector] = []
        for start in range(0, len(texts), _EMBED_BATCH):
            batch = list(texts[start : start + _EMBED_BATCH])
            body = self._post_with_retries(
                "/embeddings",
                {"model": self.cfg.embed_model or self.cfg.model, "input": batch},
            )
            data = body.get("data")
            if not isinstance(data, list) or len(data) != len(batch):
                raise ProviderResponseError("embeddings response count mismatch")
            if all(isinstance(e, dict) and "index" in e for e in data):
                data = sorted(data, key=lambda e: e["index"])
            for entry in data:
                vec = entry.get("embedding") if isinstance(entry, dict) else None
                if not isinstance(vec, list):
                    raise ProviderResponseError("embedding entry missing vector")
                if len(vec) != self.cfg.embedding_dim:
                    raise ConfigError(
                        f"provider returned dim {len(vec)}, "
                        f"configured embedding_dim is {self.cfg.embedding_dim}"
                    )
                out.append(EmbeddingVector.normalized(vec))
        return out


def chat(cfg: ProviderConfig, req: ChatRequest) -> str:
    return OpenAICompatClient(cfg).chat(req)


def embed(cfg: ProviderConfig, texts: Sequence[str]) -> list[EmbeddingVector]:
    return OpenAICompatClient(cfg).embed(texts)
