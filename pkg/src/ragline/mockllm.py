"""Scripted local chat backend for tests and offline demos.

Serves the same chat-completions wire contract the generation client speaks:
POST a JSON body with messages/max_tokens/stream, get either a single JSON
response or an SSE stream of delta events. Behaviors can be queued per
request to script slow responses, error statuses, length stops, and
mid-stream connection drops; with no queued behavior the server answers
deterministically from the prompt and honors max_tokens.
"""

from __future__ import annotations

import json
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass
class MockBehavior:
    tokens: list[str] | None = None  # None: derive from the request
    finish_reason: str = "stop"
    status: int = 200
    pre_delay: float = 0.0  # sleep before sending the status line
    token_delay: float = 0.0
    abort_after: int | None = None  # close the socket after N deltas, no [DONE]
    headers: dict[str, str] = field(default_factory=dict)


def _derive_tokens(payload: dict) -> list[str]:
    user_text = ""
    for message in reversed(payload.get("messages", [])):
        if message.get("role") == "user":
            user_text = message.get("content", "")
            break
    words = ["Mock", "answer", "grounded", "in", "the", "prompt:"] + user_text.split()[:40]
    return [w + " " for w in words]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # silence per-request stderr noise
        pass

    def do_POST(self):
        try:
            self._handle()
        except (BrokenPipeError, ConnectionResetError):
            pass  # client went away (timeout tests); keep serving

    def _handle(self):
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length) or b"{}")
        behavior = self.server.owner._next_behavior()
        self.server.owner.request_count += 1

        if behavior.pre_delay:
            time.sleep(behavior.pre_delay)

        if behavior.status != 200:
            body = json.dumps({"error": {"message": f"scripted failure {behavior.status}"}}).encode()
            self.send_response(behavior.status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return

        tokens = list(behavior.tokens) if behavior.tokens is not None else _derive_tokens(payload)
        finish_reason = behavior.finish_reason
        max_tokens = payload.get("max_tokens")
        if isinstance(max_tokens, int) and len(tokens) > max_tokens:
            tokens = tokens[:max_tokens]
            finish_reason = "length"

        if not payload.get("stream", False):
            body = json.dumps(
                {"choices": [{"message": {"content": "".join(tokens)}, "finish_reason": finish_reason}]}
            ).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return

        # Chunked transfer so an abort is a protocol violation the client
        # can distinguish from a normal end of stream.
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()

        for i, token in enumerate(tokens):
            if behavior.abort_after is not None and i >= behavior.abort_after:
                # Send FIN without the terminal chunk: the client sees an
                # incomplete chunked body, not a normal end of stream.
                self.wfile.flush()
                self.connection.shutdown(socket.SHUT_RDWR)
                self.close_connection = True
                return
            self._chunk(_sse_delta({"content": token}, None))
            if behavior.token_delay:
                time.sleep(behavior.token_delay)
        self._chunk(_sse_delta({}, finish_reason))
        self._chunk("data: [DONE]\n\n")
        self.wfile.write(b"0\r\n\r\n")

    def _chunk(self, text: str):
        data = text.encode("utf-8")
        self.wfile.write(f"{len(data):X}\r\n".encode() + data + b"\r\n")
        self.wfile.flush()


def _sse_delta(delta: dict, finish_reason: str | None) -> str:
    event = {"choices": [{"delta": delta, "finish_reason": finish_reason}]}
    return f"data: {json.dumps(event)}\n\n"


class _QuietServer(ThreadingHTTPServer):
    daemon_threads = True

    def handle_error(self, request, client_address):
        # Clients disconnect on purpose in timeout and abort tests.
        pass


class MockLLMServer:
    """Threaded mock backend; start() binds an ephemeral port."""

    def __init__(self):
        self._behaviors: deque[MockBehavior] = deque()
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self.request_count = 0

    def queue(self, behavior: MockBehavior) -> None:
        with self._lock:
            self._behaviors.append(behavior)

    def _next_behavior(self) -> MockBehavior:
        with self._lock:
            if self._behaviors:
                return self._behaviors.popleft()
        return MockBehavior()

    def start(self) -> "MockLLMServer":
        self._server = _QuietServer(("127.0.0.1", 0), _Handler)
        self._server.owner = self
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        self._thread.start()
        return self

    @property
    def url(self) -> str:
        assert self._server is not None, "server not started"
        return f"http://127.0.0.1:{self._server.server_address[1]}/v1/chat/completions"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockLLMServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
