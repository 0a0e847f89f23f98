"""Chat-completion wire client shared by every model-backed stage, plus an
in-process mock backend for tests.

One wire shape covers all backends: POST {endpoint}/v1/chat/completions with
{"model": ..., "messages": [{"role": ..., "content": ...}], "max_tokens": ...,
"temperature": ...}. The request body is serialized with a fixed field order
so identical requests produce identical bytes.
"""

from __future__ import annotations

import asyncio
import json
import logging
import random
import threading
import time
import weakref
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx

from .errors import BackendError, CompletionTimeout, InvalidInputError, ProtocolError

log = logging.getLogger(__name__)

COMPLETIONS_PATH = "/v1/chat/completions"
_ROLES = ("system", "user", "assistant")

# Built once: per-client SSL context construction reads the CA bundle from
# disk and would block the event loop on every call.
_SSL_CONTEXT = httpx.create_ssl_context()

# One shared client per event loop: client construction costs tens of
# milliseconds of synchronous work, which would serialize concurrent
# fan-outs. Entries die with their loop.
_clients: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_clients_lock = threading.Lock()


def _shared_client() -> httpx.AsyncClient:
    loop = asyncio.get_running_loop()
    with _clients_lock:
        client = _clients.get(loop)
        if client is None or client.is_closed:
            client = httpx.AsyncClient(verify=_SSL_CONTEXT)
            _clients[loop] = client
        return client


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise InvalidInputError(f"unknown chat role: {self.role!r}")
        if not self.content and self.role != "assistant":
            raise InvalidInputError(f"empty content for role {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    max_tokens: int = 1024
    temperature: float = 0.7

    def __post_init__(self):
        if not self.messages:
            raise InvalidInputError("a completion request needs at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise InvalidInputError("first message must be system or user")
        if self.max_tokens < 1:
            raise InvalidInputError("max_tokens must be positive")
        if self.temperature < 0:
            raise InvalidInputError("temperature must be >= 0")

    def to_bytes(self) -> bytes:
        """Canonical wire bytes; field order is fixed and bit-stable."""
        payload = {
            "model": self.model_id,
            "messages": [m.to_dict() for m in self.messages],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


async def complete(
    endpoint: str,
    request: CompletionRequest,
    timeout_ms: int = 30_000,
    retries: int = 2,
    api_token: str | None = None,
    backoff_base_ms: int = 250,
) -> str:
    """POST the request and return the first choice's message content.

    Transient failures (connect errors, HTTP 5xx) are retried up to `retries`
    times with exponential backoff and full jitter. Timeouts and HTTP 4xx are
    not retried.
    """
    url = endpoint.rstrip("/") + COMPLETIONS_PATH
    body = request.to_bytes()
    headers = {"Content-Type": "application/json"}
    if api_token:
        headers["Authorization"] = f"Bearer {api_token}"
    timeout = httpx.Timeout(timeout_ms / 1000.0)

    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            await asyncio.sleep(random.uniform(0, backoff_base_ms * 2 ** (attempt - 1)) / 1000.0)
        try:
            resp = await _shared_client().post(url, content=body, headers=headers, timeout=timeout)
        except (httpx.ConnectError, httpx.ConnectTimeout) as exc:
            last_error = exc
            log.debug("connect failure on attempt %d to %s: %s", attempt + 1, url, exc)
            continue
        except httpx.TimeoutException as exc:
            raise CompletionTimeout(f"no answer from {url} within {timeout_ms} ms") from exc
        if resp.status_code >= 500:
            last_error = BackendError(f"{url} answered HTTP {resp.status_code}")
            log.debug("HTTP %d on attempt %d to %s", resp.status_code, attempt + 1, url)
            continue
        if resp.status_code >= 400:
            raise BackendError(f"{url} rejected the request: HTTP {resp.status_code}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed completion body from {url}: {exc}") from exc
        if not isinstance(content, str):
            raise ProtocolError(f"completion content is not text: {type(content).__name__}")
        return content
    raise BackendError(f"{url} failed after {retries + 1} attempts: {last_error}")


@dataclass(frozen=True)
class MockBehavior:
    """Scripted behavior for one mock backend.

    `replies` maps a substring of the last user message to a canned reply;
    unmatched requests get `default_reply`, or echo the last user message
    when no default is set.
    """

    replies: tuple[tuple[str, str], ...] = ()
    default_reply: str | None = None
    injected_delay_ms: int = 0
    failure_mode: str = "none"  # none | http_500 | hang

    def __post_init__(self):
        if self.failure_mode not in ("none", "http_500", "hang"):
            raise InvalidInputError(f"unknown failure mode: {self.failure_mode!r}")

    def reply_for(self, last_user_message: str) -> str:
        for needle, reply in self.replies:
            if needle in last_user_message:
                return reply
        if self.default_reply is not None:
            return self.default_reply
        return last_user_message


_HANG_SECONDS = 120.0


class MockBackend:
    """A local HTTP listener speaking the chat-completion shape.

    Every request is appended to `calls` (also served at GET /__calls) so
    tests can assert on attempt counts and raw bodies.
    """

    def __init__(self, behavior: MockBehavior):
        self.behavior = behavior
        self.calls: list[dict] = []
        self._lock = threading.Lock()
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def _send_json(self, status: int, payload: dict):
                data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                if self.path == "/__calls":
                    with backend._lock:
                        snapshot = list(backend.calls)
                    self._send_json(200, snapshot)
                else:
                    self._send_json(404, {"error": "not found"})

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                try:
                    parsed = json.loads(raw)
                except ValueError:
                    parsed = None
                with backend._lock:
                    backend.calls.append(
                        {"path": self.path, "body": parsed, "raw": raw.decode("utf-8", "replace")}
                    )
                behavior = backend.behavior
                if behavior.failure_mode == "hang":
                    time.sleep(_HANG_SECONDS)
                if behavior.injected_delay_ms:
                    time.sleep(behavior.injected_delay_ms / 1000.0)
                if behavior.failure_mode == "http_500":
                    self._send_json(500, {"error": "scripted failure"})
                    return
                last_user = ""
                if isinstance(parsed, dict):
                    for message in parsed.get("messages", []):
                        if isinstance(message, dict) and message.get("role") == "user":
                            last_user = message.get("content", "")
                reply = behavior.reply_for(last_user)
                self._send_json(
                    200,
                    {
                        "id": f"mock-{len(backend.calls)}",
                        "object": "chat.completion",
                        "model": (parsed or {}).get("model", "mock"),
                        "choices": [
                            {
                                "index": 0,
                                "message": {"role": "assistant", "content": reply},
                                "finish_reason": "stop",
                            }
                        ],
                    },
                )

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        self.endpoint = f"http://127.0.0.1:{self._server.server_address[1]}"

    def reset_calls(self) -> None:
        with self._lock:
            self.calls.clear()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "MockBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def spawn_mock_backend(behavior: MockBehavior) -> MockBackend:
    """Start a mock chat-completion server; returns the handle carrying
    `endpoint` and the `calls` log."""
    return MockBackend(behavior)
