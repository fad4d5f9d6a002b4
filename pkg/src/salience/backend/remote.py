"""Remote scoring: a JSON-over-HTTP client plus a small server wrapper.

Protocol (version 1):

* ``POST /score``  body ``{"version": 1, "queries": [{"tokens": [...],
  "masked_positions": [...], "target_ids": [...], "prompt_injections":
  [{"position": int, "vector": [...]}]}]}`` ->
  ``{"version": 1, "log_probs": [[...]]}``. Doubles round-trip exactly
  (shortest-repr JSON floats).
* ``GET /info``    -> vocabulary size, embedding dim, identifier, and the
  reserved token ids, so a client can render templates remotely.
* ``POST /tokenize`` body ``{"version": 1, "texts": [...]}`` ->
  ``{"version": 1, "tokens": [[...]]}``.

The remote backend is inference-only: no prompt gradients.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from ..errors import BackendError, RemoteProtocolError
from .base import Backend, BackendInfo, MaskedQuery

PROTOCOL_VERSION = 1
_EXCERPT = 200


def queries_to_wire(queries: list[MaskedQuery]) -> dict:
    return {
        "version": PROTOCOL_VERSION,
        "queries": [
            {
                "tokens": list(q.tokens),
                "masked_positions": list(q.masked_positions),
                "target_ids": list(q.target_ids),
                "prompt_injections": [
                    {"position": int(pos), "vector": [float(x) for x in np.asarray(vec)]}
                    for pos, vec in q.prompt_injections
                ],
            }
            for q in queries
        ],
    }


def queries_from_wire(body: dict) -> list[MaskedQuery]:
    if body.get("version") != PROTOCOL_VERSION:
        raise RemoteProtocolError(
            f"protocol version mismatch: got {body.get('version')!r}, expected {PROTOCOL_VERSION}"
        )
    queries = []
    for q in body.get("queries", []):
        queries.append(
            MaskedQuery(
                tokens=tuple(int(t) for t in q["tokens"]),
                masked_positions=tuple(int(p) for p in q["masked_positions"]),
                target_ids=tuple(int(t) for t in q["target_ids"]),
                prompt_injections=tuple(
                    (int(inj["position"]), np.asarray(inj["vector"], dtype=np.float64))
                    for inj in q.get("prompt_injections", [])
                ),
            )
        )
    return queries


def _post(url: str, payload: dict, timeout: float) -> dict:
    data = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}, method="POST"
    )
    return _request(req, timeout)


def _request(req: urllib.request.Request, timeout: float) -> dict:
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raw = exc.read()
        raise RemoteProtocolError(
            f"remote returned HTTP {exc.code}: {raw[:_EXCERPT]!r}"
        ) from exc
    except (urllib.error.URLError, OSError) as exc:
        raise BackendError(f"transport failure reaching {req.full_url}: {exc}") from exc
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RemoteProtocolError(
            f"malformed response from {req.full_url}: {raw[:_EXCERPT]!r}"
        ) from exc
    if not isinstance(body, dict):
        raise RemoteProtocolError(f"expected a JSON object, got: {raw[:_EXCERPT]!r}")
    return body


def remote_score(
    endpoint: str, queries: list[MaskedQuery], timeout: float = 30.0
) -> list[list[float]]:
    """Score a batch against a remote backend; semantics match
    forward_log_probs of the remote model."""
    if not queries:
        return []
    body = _post(endpoint.rstrip("/") + "/score", queries_to_wire(queries), timeout)
    if body.get("version") != PROTOCOL_VERSION:
        raise RemoteProtocolError(
            f"protocol version mismatch in response: {body.get('version')!r}"
        )
    if "log_probs" not in body or not isinstance(body["log_probs"], list):
        raise RemoteProtocolError(f"response missing log_probs: {json.dumps(body)[:_EXCERPT]!r}")
    out = [[float(x) for x in row] for row in body["log_probs"]]
    if len(out) != len(queries):
        raise RemoteProtocolError(
            f"expected {len(queries)} result rows, got {len(out)}"
        )
    for q, row in zip(queries, out):
        if len(row) != len(q.masked_positions):
            raise RemoteProtocolError("result row length does not match masked positions")
    return out


class RemoteBackend(Backend):
    """Backend facade over a remote endpoint; inference-only."""

    supports_gradients = False

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        self._endpoint = endpoint.rstrip("/")
        self._timeout = timeout
        req = urllib.request.Request(self._endpoint + "/info", method="GET")
        info = _request(req, timeout)
        if info.get("version") != PROTOCOL_VERSION:
            raise RemoteProtocolError(
                f"protocol version mismatch: got {info.get('version')!r}"
            )
        try:
            self._info = BackendInfo(
                int(info["vocab_size"]), int(info["embedding_dim"]), str(info["identifier"])
            )
            self._mask_id = int(info["mask_id"])
            self._unk_id = int(info["unk_id"])
            self._prompt_id = int(info["prompt_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteProtocolError(f"bad /info payload: {json.dumps(info)[:_EXCERPT]!r}") from exc

    def info(self) -> BackendInfo:
        return self._info

    @property
    def mask_id(self) -> int:
        return self._mask_id

    @property
    def unk_id(self) -> int:
        return self._unk_id

    @property
    def prompt_id(self) -> int:
        return self._prompt_id

    def tokenize(self, text: str) -> list[int]:
        body = _post(
            self._endpoint + "/tokenize",
            {"version": PROTOCOL_VERSION, "texts": [text]},
            self._timeout,
        )
        try:
            return [int(t) for t in body["tokens"][0]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise RemoteProtocolError(
                f"bad /tokenize payload: {json.dumps(body)[:_EXCERPT]!r}"
            ) from exc

    def detokenize(self, ids: list[int]) -> str:
        raise BackendError("remote backend does not expose detokenization")

    def forward_log_probs(self, queries: list[MaskedQuery]) -> list[list[float]]:
        return remote_score(self._endpoint, queries, self._timeout)


class _Handler(BaseHTTPRequestHandler):
    backend: Backend  # set by serve_backend

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass

    def _send(self, code: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:  # noqa: N802 - stdlib signature
        if self.path.rstrip("/") in ("", "/info"):
            info = self.backend.info()
            self._send(
                200,
                {
                    "version": PROTOCOL_VERSION,
                    "vocab_size": info.vocab_size,
                    "embedding_dim": info.embedding_dim,
                    "identifier": info.identifier,
                    "mask_id": self.backend.mask_id,
                    "unk_id": self.backend.unk_id,
                    "prompt_id": self.backend.prompt_id,
                },
            )
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self) -> None:  # noqa: N802 - stdlib signature
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send(400, {"error": "request body is not valid JSON"})
            return
        path = self.path.rstrip("/")
        try:
            if path == "/score":
                queries = queries_from_wire(body)
                log_probs = self.backend.forward_log_probs(queries)
                self._send(200, {"version": PROTOCOL_VERSION, "log_probs": log_probs})
            elif path == "/tokenize":
                if body.get("version") != PROTOCOL_VERSION:
                    raise RemoteProtocolError("protocol version mismatch")
                tokens = [self.backend.tokenize(str(t)) for t in body.get("texts", [])]
                self._send(200, {"version": PROTOCOL_VERSION, "tokens": tokens})
            else:
                self._send(404, {"error": f"unknown path {self.path}"})
        except (BackendError, KeyError, TypeError, ValueError) as exc:
            self._send(400, {"error": str(exc)})


class BackendServer:
    """In-process HTTP server exposing a backend over the wire protocol."""

    def __init__(self, backend: Backend, host: str = "127.0.0.1", port: int = 0) -> None:
        handler = type("BoundHandler", (_Handler,), {"backend": backend})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "BackendServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "BackendServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_backend(backend: Backend, host: str = "127.0.0.1", port: int = 0) -> BackendServer:
    return BackendServer(backend, host, port)
