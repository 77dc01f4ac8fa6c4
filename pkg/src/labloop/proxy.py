"""HTTP metering proxy for sandboxed experiment code.

Speaks the de-facto chat-completion shape: POST /v1/chat/completions with a
JSON body of {model, messages, ...}. The run token arrives in the
X-Run-Token header (or Authorization: Bearer); it maps to the run whose
ledger the call is charged to. Denied or unauthenticated calls never touch a
ledger.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import BudgetExceededError, TransportError, ValidationError
from .gateway import CALLER_EXPERIMENT, Gateway


class MeteringProxy:
    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0):
        self.gateway = gateway
        self._tokens: dict[str, str] = {}
        self._tokens_lock = threading.Lock()
        proxy = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # silence per-request stderr noise
                pass

            def do_POST(self) -> None:
                proxy._handle(self)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MeteringProxy":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MeteringProxy":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    # -- tokens ---------------------------------------------------------------

    def register_token(self, token: str, run_id: str) -> None:
        with self._tokens_lock:
            self._tokens[token] = run_id

    def revoke_token(self, token: str) -> None:
        with self._tokens_lock:
            self._tokens.pop(token, None)

    def _run_for_token(self, token: str) -> str | None:
        with self._tokens_lock:
            return self._tokens.get(token)

    # -- request handling -------------------------------------------------------

    def _handle(self, request: "BaseHTTPRequestHandler") -> None:
        # Drain the body up front so error replies do not reset the connection.
        raw_body = b""
        try:
            length = int(request.headers.get("Content-Length", "0"))
            raw_body = request.rfile.read(length)
        except (ValueError, OSError):
            pass

        if not request.path.endswith("/chat/completions"):
            _reply(request, 404, {"error": {"message": f"unknown path {request.path}"}})
            return

        token = request.headers.get("X-Run-Token", "")
        if not token:
            auth = request.headers.get("Authorization", "")
            if auth.startswith("Bearer "):
                token = auth[len("Bearer "):]
        run_id = self._run_for_token(token) if token else None
        if run_id is None:
            _reply(request, 401, {"error": {"message": "missing or unknown run token"}})
            return

        try:
            body = json.loads(raw_body.decode("utf-8"))
        except (ValueError, json.JSONDecodeError) as exc:
            _reply(request, 400, {"error": {"message": f"bad request body: {exc}"}})
            return

        model = body.get("model")
        messages = body.get("messages")
        if not model or not isinstance(messages, list):
            _reply(request, 400, {"error": {"message": "body must carry model and messages"}})
            return
        prompt = "\n".join(
            f"{m.get('role', 'user')}: {m.get('content', '')}" for m in messages
        )
        decoding = {
            key: body[key]
            for key in ("temperature", "max_tokens", "seed")
            if key in body
        }
        iteration = self.gateway.current_iteration(run_id)

        try:
            text, record = self.gateway.complete(
                run_id, iteration, model, prompt, decoding or None, caller=CALLER_EXPERIMENT
            )
        except BudgetExceededError as exc:
            _reply(
                request,
                429,
                {"error": {"message": str(exc), "type": "budget_exceeded", "limit": exc.limit}},
            )
            return
        except ValidationError as exc:
            _reply(request, 400, {"error": {"message": str(exc)}})
            return
        except TransportError as exc:
            _reply(request, 502, {"error": {"message": str(exc)}})
            return

        _reply(
            request,
            200,
            {
                "id": record.call_id,
                "object": "chat.completion",
                "model": model,
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": text},
                        "finish_reason": "length" if record.truncated else "stop",
                    }
                ],
                "usage": {
                    "prompt_tokens": record.input_tokens,
                    "completion_tokens": record.output_tokens,
                    "total_tokens": record.input_tokens + record.output_tokens,
                },
            },
        )


def proxy_listen(
    gateway: Gateway,
    run_tokens: dict[str, str],
    host: str = "127.0.0.1",
    port: int = 0,
) -> MeteringProxy:
    """Start an interceptor with a prefilled token -> run-id map."""
    proxy = MeteringProxy(gateway, host=host, port=port)
    for token, run_id in run_tokens.items():
        proxy.register_token(token, run_id)
    return proxy.start()


def _reply(request: "BaseHTTPRequestHandler", status: int, payload: dict) -> None:
    data = json.dumps(payload).encode("utf-8")
    request.send_response(status)
    request.send_header("Content-Type", "application/json")
    request.send_header("Content-Length", str(len(data)))
    request.end_headers()
    request.wfile.write(data)
