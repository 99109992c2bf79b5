"""Read-only HTTP serving mode.

Endpoints: GET /healthz (liveness), POST /retrieve, POST /context. The
process answers 503 on the POST routes until the indices finish loading;
malformed bodies get 400. All shared state is immutable once loaded, so
concurrent requests are safe and agree with sequential execution.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import AppConfig
from .errors import KgcqrError
from .runtime import RETRIEVERS, Runtime, scrub_wall_ms

log = logging.getLogger(__name__)

_MAX_BODY = 1 << 20


class BadRequest(Exception):
    """Client-side problem with the request body; becomes a 400."""


class ServerState:
    """Loading status shared between the handler and the loader thread."""

    def __init__(self) -> None:
        self.runtime: Runtime | None = None
        self.error: str | None = None
        self._lock = threading.Lock()

    def set_runtime(self, runtime: Runtime) -> None:
        with self._lock:
            self.runtime = runtime

    def set_error(self, message: str) -> None:
        with self._lock:
            self.error = message

    def get(self) -> tuple[Runtime | None, str | None]:
        with self._lock:
            return self.runtime, self.error


class KgcqrServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], state: ServerState):
        super().__init__(addr, Handler)
        self.state = state


class Handler(BaseHTTPRequestHandler):
    server: KgcqrServer

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, status: int, text: str) -> None:
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if self.path == "/healthz":
            self._send_text(200, "ok")
        else:
            self._send_json(404, {"error": f"no such path {self.path}"})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0 or length > _MAX_BODY:
            raise BadRequest("request body required")
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except ValueError as exc:
            raise BadRequest(f"body is not valid JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise BadRequest("body must be a JSON object")
        return body

    def do_POST(self) -> None:
        if self.path not in ("/retrieve", "/context"):
            self._send_json(404, {"error": f"no such path {self.path}"})
            return
        runtime, error = self.server.state.get()
        if runtime is None:
            self._send_json(503, {"error": error or "indices are loading"})
            return
        try:
            body = self._read_body()
            if self.path == "/retrieve":
                payload = self._retrieve(runtime, body)
            else:
                payload = self._context(runtime, body)
        except BadRequest as exc:
            self._send_json(400, {"error": str(exc)})
            return
        except KgcqrError as exc:
            log.warning("request failed: %s", exc)
            self._send_json(500, {"error": str(exc)})
            return
        if runtime.mock:
            payload = scrub_wall_ms(payload)
        self._send_json(200, payload)

    @staticmethod
    def _query_of(body: dict) -> str:
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            raise BadRequest('"query" must be a non-empty string')
        return query

    def _retrieve(self, runtime: Runtime, body: dict) -> dict:
        query = self._query_of(body)
        top_n = body.get("top_n")
        if not isinstance(top_n, int) or isinstance(top_n, bool) or top_n <= 0:
            raise BadRequest('"top_n" must be a positive integer')
        alpha = body.get("alpha")
        if alpha is not None:
            if not isinstance(alpha, (int, float)) or isinstance(alpha, bool) or not 0 <= alpha <= 1:
                raise BadRequest('"alpha" must be a number in [0, 1]')
            alpha = float(alpha)
        retriever = body.get("retriever", "dense")
        if retriever not in RETRIEVERS:
            raise BadRequest(f'"retriever" must be one of {list(RETRIEVERS)}')
        params = runtime.params_with(alpha=alpha)
        result, ctx = runtime.retrieve(query, top_n, retriever=retriever, params=params)
        payload: dict = {
            "ranking": [{"doc_id": d, "score": s} for d, s in result.ranking],
        }
        if ctx is not None:
            payload["trace"] = ctx.trace_payload()
        return payload

    def _context(self, runtime: Runtime, body: dict) -> dict:
        query = self._query_of(body)
        ctx = runtime.contextualize(query)
        return {"context": ctx.context_text, "subgraph": ctx.subgraph_records()}


def build_server(cfg: AppConfig, state: ServerState | None = None) -> KgcqrServer:
    """Bind the listening socket; state may still be loading (503s until
    a runtime is attached)."""
    return KgcqrServer((cfg.server.bind_addr, cfg.server.port), state or ServerState())


def serve(cfg: AppConfig, mock: bool) -> int:
    """CLI entry: listen immediately, load in the background, serve forever."""
    state = ServerState()
    srv = build_server(cfg, state)

    def _load() -> None:
        try:
            state.set_runtime(Runtime.load(cfg, mock))
            log.info("runtime loaded; serving")
        except Exception as exc:  # surface load failures through 503 bodies
            log.error("failed to load runtime: %s", exc)
            state.set_error(f"load failed: {exc}")

    threading.Thread(target=_load, daemon=True, name="kgcqr-loader").start()
    host, port = srv.server_address[0], srv.server_address[1]
    print(f"serving on http://{host}:{port}", flush=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
    return 0
