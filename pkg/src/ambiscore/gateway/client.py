"""OpenAI-compatible chat and embedding client with caching and retries."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import httpx
import numpy as np

from .._util import canonical_json
from .cache import ResponseCache, cache_key

log = logging.getLogger(__name__)

API_KEY_ENV = "AMBISCORE_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_EMBEDDING_MODEL = "BAAI/bge-small-en-v1.5"
RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})
EMBED_BATCH = 64


class GatewayError(RuntimeError):
    pass


class RequestError(GatewayError):
    """Invalid request or non-retryable 4xx response."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class TransportError(GatewayError):
    """Retries exhausted; ``attempts`` holds one line per failed try."""

    def __init__(self, message: str, attempts: list[str]):
        super().__init__(message + "\n" + "\n".join(attempts))
        self.attempts = attempts


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 20.0
    jitter: float = 0.25
    timeout: float = 60.0

    def delay(self, attempt: int, rng: random.Random) -> float:
        d = min(self.max_delay, self.base_delay * 2 ** (attempt - 1))
        return d * (1.0 + self.jitter * rng.uniform(-1.0, 1.0))


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 16

    def validate(self) -> None:
        if not self.model_id:
            raise RequestError("model_id is empty")
        if not self.messages:
            raise RequestError("messages must be non-empty")
        for role, text in self.messages:
            if role not in ("system", "user", "assistant"):
                raise RequestError(f"unknown role {role!r}")
            if not isinstance(text, str):
                raise RequestError("message text must be a string")
        if self.max_tokens < 1:
            raise RequestError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0:
            raise RequestError("temperature must be >= 0")

    def payload(self) -> dict:
        return {
            "model": self.model_id,
            "messages": [{"role": r, "content": t} for r, t in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


class Completion(NamedTuple):
    text: str
    provenance: str
    cached: bool


@dataclass
class Gateway:
    """Chat/embedding client. All responses pass through the on-disk cache.

    ``network_calls`` counts HTTP requests actually sent (retries included),
    so a fully warmed run can assert it stays at zero.
    """

    base_url: str = DEFAULT_BASE_URL
    cache_dir: str | os.PathLike | None = None
    api_key: str | None = None
    policy: RetryPolicy = field(default_factory=RetryPolicy)
    max_in_flight: int = 4
    transport: httpx.BaseTransport | None = None
    provenance: str = "network"
    sleep: Callable[[float], None] = time.sleep
    seed: int = 0

    def __post_init__(self):
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._http = httpx.Client(
            base_url=self.base_url.rstrip("/"),
            headers=headers,
            timeout=self.policy.timeout,
            transport=self.transport,
        )
        self.cache = ResponseCache(self.cache_dir) if self.cache_dir is not None else None
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._lock = threading.Lock()
        self._rng = random.Random(self.seed)
        self.network_calls = 0

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # ------------------------------------------------------------------

    def _post(self, path: str, payload: dict, policy: RetryPolicy) -> dict:
        body = canonical_json(payload)
        attempts: list[str] = []
        for attempt in range(1, policy.max_attempts + 1):
            with self._lock:
                self.network_calls += 1
            retry_after = None
            try:
                with self._slots:
                    resp = self._http.post(path, content=body, timeout=policy.timeout)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                attempts.append(f"attempt {attempt}: {type(exc).__name__}: {exc}")
            else:
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError:
                        attempts.append(f"attempt {attempt}: HTTP {resp.status_code} with non-JSON body")
                        continue
                detail = resp.text[:200]
                if resp.status_code not in RETRYABLE_STATUS:
                    raise RequestError(f"HTTP {resp.status_code} from {path}: {detail}", resp.status_code)
                attempts.append(f"attempt {attempt}: HTTP {resp.status_code}: {detail}")
                ra = resp.headers.get("Retry-After")
                if ra and ra.replace(".", "", 1).isdigit():
                    retry_after = float(ra)
            if attempt < policy.max_attempts:
                with self._lock:
                    wait = policy.delay(attempt, self._rng)
                self.sleep(max(wait, retry_after or 0.0))
        raise TransportError(f"{path}: giving up after {policy.max_attempts} attempts", attempts)

    def _put_cache(self, kind, model_id, payload, response):
        if self.cache is None:
            return
        try:
            self.cache.put(kind, model_id, payload, response, self.provenance)
        except OSError as exc:
            log.warning("cache write failed (%s); continuing without caching", exc)

    def chat_complete(self, req: ChatRequest, policy: RetryPolicy | None = None) -> Completion:
        req.validate()
        payload = req.payload()
        if self.cache is not None:
            key = cache_key("chat", req.model_id, payload)
            hit = self.cache.get(key, canonical_json(payload).decode("utf-8"))
            if hit is not None:
                return Completion(hit.response, hit.provenance, True)
        data = self._post("/chat/completions", payload, policy or self.policy)
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise GatewayError(f"malformed chat response: {str(data)[:200]}") from None
        self._put_cache("chat", req.model_id, payload, text)
        return Completion(text, self.provenance, False)

    def embed(self, texts: Sequence[str], model_id: str = DEFAULT_EMBEDDING_MODEL,
              policy: RetryPolicy | None = None) -> list[np.ndarray]:
        if not texts:
            raise RequestError("no texts to embed")
        if any(not t for t in texts):
            raise RequestError("cannot embed an empty text")
        out: list[np.ndarray | None] = [None] * len(texts)
        missing: dict[str, list[int]] = {}
        for n, t in enumerate(texts):
            if self.cache is not None:
                payload = {"model": model_id, "input": t}
                hit = self.cache.get(cache_key("embedding", model_id, payload))
                if hit is not None:
                    out[n] = np.asarray(hit.response, dtype=np.float64)
                    continue
            missing.setdefault(t, []).append(n)
        pending = list(missing)
        for start in range(0, len(pending), EMBED_BATCH):
            chunk = pending[start:start + EMBED_BATCH]
            data = self._post("/embeddings", {"model": model_id, "input": chunk}, policy or self.policy)
            try:
                rows = sorted(data["data"], key=lambda r: r["index"])
                vecs = [list(map(float, r["embedding"])) for r in rows]
            except (KeyError, TypeError, ValueError):
                raise GatewayError(f"malformed embedding response: {str(data)[:200]}") from None
            if len(vecs) != len(chunk):
                raise GatewayError(f"asked for {len(chunk)} embeddings, got {len(vecs)}")
            for t, v in zip(chunk, vecs):
                self._put_cache("embedding", model_id, {"model": model_id, "input": t}, v)
                arr = np.asarray(v, dtype=np.float64)
                for n in missing[t]:
                    out[n] = arr
        dims = {v.shape[0] for v in out}  # type: ignore[union-attr]
        if len(dims) != 1 or 0 in dims:
            raise GatewayError(f"embedding dimension mismatch in batch: {sorted(dims)}")
        return out  # type: ignore[return-value]
