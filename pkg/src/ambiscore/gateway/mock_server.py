"""Scriptable stand-in for an OpenAI-compatible endpoint.

The same :class:`MockBackend` serves real HTTP (:class:`MockServer`) and
in-process requests (:meth:`MockBackend.transport`). A script looks like::

    {
      "chat": {
        "default": "3",
        "rules": [
          {"contains": ["Sentence: The bank was", "Proposed Meaning"], "replies": ["4"]},
          {"contains": ["river"], "replies": ["garbage", "2"]}
        ]
      },
      "embedding": {"dimension": 64},
      "failures": {"chat": [503, 503], "embedding": []}
    }

Rules are tried in order against the last user message; every substring in
``contains`` must occur. ``replies`` are consumed in order, the last one
repeating. ``failures`` lists status codes returned by the first calls to
that endpoint before normal service.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterable

import httpx

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9']+")


def hashed_embedding(text: str, dimension: int = 64) -> list[float]:
    """Deterministic bag-of-words feature-hashing embedding, L2-normalized."""
    vec = [0.0] * dimension
    for tok in _TOKEN.findall(text.lower()):
        h = hashlib.sha256(tok.encode("utf-8")).digest()
        idx = int.from_bytes(h[:4], "little") % dimension
        vec[idx] += 1.0 if h[4] & 1 else -1.0
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return [v / norm for v in vec]


@dataclass
class Rule:
    contains: list[str]
    replies: list[str]
    model: str | None = None


@dataclass
class MockScript:
    chat_default: str | None = "3"
    rules: list[Rule] = field(default_factory=list)
    embedding_dimension: int = 64
    failures: dict[str, list[int]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "MockScript":
        chat = d.get("chat", {})
        return cls(
            chat_default=chat.get("default", "3"),
            rules=[Rule(list(r["contains"]), list(r["replies"]), r.get("model")) for r in chat.get("rules", [])],
            embedding_dimension=int(d.get("embedding", {}).get("dimension", 64)),
            failures={k: list(v) for k, v in d.get("failures", {}).items()},
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "MockScript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "chat": {
                "default": self.chat_default,
                "rules": [{"contains": r.contains, "replies": r.replies, **({"model": r.model} if r.model else {})}
                          for r in self.rules],
            },
            "embedding": {"dimension": self.embedding_dimension},
            "failures": self.failures,
        }


def oracle_script(instances: Iterable, default: str | None = "3") -> MockScript:
    """Answer every instance's prompt with its rounded gold mean."""
    from ..corpus import gold_score
    from ..prompting import target_marker

    rules = [Rule([target_marker(inst)], [str(gold_score(inst))]) for inst in instances if inst.labeled]
    return MockScript(chat_default=default, rules=rules)


class MockBackend:
    def __init__(self, script: MockScript | None = None):
        self.script = script or MockScript()
        self._lock = threading.Lock()
        self._served: Counter[str] = Counter()
        self._rule_pos: Counter[int] = Counter()
        self.requests: Counter[str] = Counter()

    def stats(self) -> dict:
        with self._lock:
            return {"requests": dict(self.requests)}

    def handle(self, method: str, path: str, body: bytes) -> tuple[int, dict]:
        path = path.split("?", 1)[0].rstrip("/")
        if method == "GET" and path.endswith("/_mock/stats"):
            return 200, self.stats()
        if method != "POST":
            return 405, {"error": {"message": "method not allowed"}}
        if path.endswith("/chat/completions"):
            kind = "chat"
        elif path.endswith("/embeddings"):
            kind = "embedding"
        else:
            return 404, {"error": {"message": f"no route {path}"}}
        try:
            req = json.loads(body or b"{}")
        except json.JSONDecodeError:
            return 400, {"error": {"message": "invalid JSON"}}
        with self._lock:
            self.requests[kind] += 1
            n = self._served[kind]
            self._served[kind] += 1
            fails = self.script.failures.get(kind, [])
            if n < len(fails):
                return fails[n], {"error": {"message": f"scripted failure {fails[n]}"}}
            if kind == "chat":
                return self._chat(req)
            return self._embed(req)

    def _chat(self, req: dict) -> tuple[int, dict]:
        messages = req.get("messages") or []
        if not messages:
            return 400, {"error": {"message": "messages required"}}
        if int(req.get("max_tokens", 1)) < 1:
            return 400, {"error": {"message": "max_tokens must be positive"}}
        user = [m.get("content", "") for m in messages if m.get("role") == "user"]
        text = user[-1] if user else ""
        model = req.get("model", "")
        reply = self.script.chat_default
        for idx, rule in enumerate(self.script.rules):
            if rule.model and rule.model != model:
                continue
            if all(s in text for s in rule.contains):
                pos = self._rule_pos[idx]
                self._rule_pos[idx] += 1
                reply = rule.replies[min(pos, len(rule.replies) - 1)]
                break
        if reply is None:
            return 400, {"error": {"message": "no scripted reply"}}
        return 200, {
            "id": "mock-" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:12],
            "object": "chat.completion",
            "model": model,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": reply}, "finish_reason": "stop"}],
        }

    def _embed(self, req: dict) -> tuple[int, dict]:
        inputs = req.get("input")
        if isinstance(inputs, str):
            inputs = [inputs]
        if not inputs:
            return 400, {"error": {"message": "input required"}}
        dim = self.script.embedding_dimension
        return 200, {
            "object": "list",
            "model": req.get("model", ""),
            "data": [{"object": "embedding", "index": i, "embedding": hashed_embedding(t, dim)}
                     for i, t in enumerate(inputs)],
        }

    def transport(self) -> httpx.MockTransport:
        def handler(request: httpx.Request) -> httpx.Response:
            status, doc = self.handle(request.method, request.url.path, request.content)
            return httpx.Response(status, json=doc)

        return httpx.MockTransport(handler)


class _Handler(BaseHTTPRequestHandler):
    backend: MockBackend

    def _reply(self, status: int, doc: dict) -> None:
        data = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):  # noqa: N802
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length)
        self._reply(*self.server.backend.handle("POST", self.path, body))

    def do_GET(self):  # noqa: N802
        self._reply(*self.server.backend.handle("GET", self.path, b""))

    def log_message(self, fmt, *args):
        log.debug("mock: " + fmt, *args)


class MockServer:
    """Threaded HTTP server around a :class:`MockBackend`; port 0 picks a free port."""

    def __init__(self, script: MockScript | None = None, host: str = "127.0.0.1", port: int = 0):
        self.backend = MockBackend(script)
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.backend = self.backend
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
