"""In-process HTTP server speaking the bridge wire protocol over any
LMBackend. Lets the remote client run the full contract suite with no
neural dependencies."""

from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from templm.backend import END_TOKEN, ConditioningContext
from templm.core import DataInput

REST_TOKEN = "__rest__"


def make_handler(backend, ready=lambda: True, version="stub-1"):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, code, payload):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path != "/health":
                self._send(404, {"error": "not found"})
                return
            if not ready():
                self._send(503, {"error": "loading"})
                return
            self._send(
                200,
                {
                    "version": version,
                    "model": "ngram-stub",
                    "vocab_size": len(backend.vocabulary()),
                },
            )

        def do_POST(self):
            if not ready():
                self._send(503, {"error": "loading"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length))
            except (ValueError, json.JSONDecodeError):
                self._send(400, {"error": "malformed request"})
                return
            if self.path == "/score":
                self._score(payload)
            elif self.path == "/generate":
                self._generate(payload)
            else:
                self._send(404, {"error": "not found"})

        def _ctx(self, payload):
            data = DataInput(
                {f: tuple(v) for f, v in payload.get("data", {}).items()},
                id="wire",
            )
            mode = payload.get("mode", "ltr")
            if mode == "infill":
                return ConditioningContext.infill(
                    data,
                    tuple(payload.get("infill_left", [])),
                    tuple(payload.get("infill_right", [])),
                )
            return ConditioningContext.left_to_right(data)

        def _score(self, payload):
            try:
                ctx = self._ctx(payload)
                prefix = tuple(payload.get("prefix", []))
                top_n = int(payload.get("top_n", 1000))
            except (TypeError, ValueError, KeyError):
                self._send(400, {"error": "malformed request"})
                return
            dist = backend.next_token_logprobs(ctx, prefix)
            ranked = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
            head = ranked[:top_n]
            names = {t for t, _ in head}
            if END_TOKEN not in names:
                head.append((END_TOKEN, dist.logprob(END_TOKEN)))
                names.add(END_TOKEN)
            rest_mass = math.fsum(
                math.exp(lp) for t, lp in ranked if t not in names
            )
            entries = [[t, lp] for t, lp in head]
            entries.append([REST_TOKEN, math.log(max(rest_mass, 1e-300))])
            self._send(200, {"entries": entries})

        def _generate(self, payload):
            try:
                data = DataInput(
                    {f: tuple(v) for f, v in payload.get("data", {}).items()},
                    id="wire",
                )
                k = int(payload.get("k", 1))
                max_len = int(payload.get("max_len", 10))
            except (TypeError, ValueError):
                self._send(400, {"error": "malformed request"})
                return
            tokens = backend.beam_generate(
                ConditioningContext.left_to_right(data), k, max_len
            )
            self._send(200, {"tokens": list(tokens)})

    return Handler


class WireStub:
    """Context manager running the stub server on an ephemeral port."""

    def __init__(self, backend, ready=lambda: True):
        self.server = ThreadingHTTPServer(
            ("127.0.0.1", 0), make_handler(backend, ready)
        )
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
