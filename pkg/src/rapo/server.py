"""Minimal HTTP front end: ``POST /optimize`` and ``GET /healthz``."""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .pipeline import Optimizer

logger = logging.getLogger(__name__)

MAX_BODY_BYTES = 1 << 20


def make_server(optimizer: Optimizer, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        server_version = "rapo"

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self) -> None:  # noqa: N802
            if self.path == "/healthz":
                self._send(200, {"status": "ok"})
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self) -> None:  # noqa: N802
            if self.path != "/optimize":
                self._send(404, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY_BYTES:
                self._send(413, {"error": "request too large"})
                return
            try:
                payload = json.loads(self.rfile.read(length) or b"null")
                text = payload["text"]
                if not isinstance(text, str):
                    raise TypeError("text must be a string")
            except (ValueError, KeyError, TypeError) as exc:
                self._send(400, {"error": f"expected a JSON object with a 'text' field ({exc})"})
                return
            if not text.strip():
                self._send(400, {"error": "text is empty"})
                return
            result = optimizer.optimize(text, id=payload.get("id"))
            self._send(200, result.as_dict())

        def log_message(self, fmt: str, *args) -> None:
            logger.info("%s - %s", self.address_string(), fmt % args)

    return ThreadingHTTPServer((host, port), Handler)
