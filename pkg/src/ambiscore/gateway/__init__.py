from .cache import CacheEntry, ResponseCache, cache_key
from .client import (
    API_KEY_ENV,
    DEFAULT_BASE_URL,
    DEFAULT_EMBEDDING_MODEL,
    ChatRequest,
    Completion,
    Gateway,
    GatewayError,
    RequestError,
    RetryPolicy,
    TransportError,
)
from .mock_server import MockBackend, MockScript, MockServer, Rule, hashed_embedding, oracle_script


def mock_gateway(script: MockScript | None = None, cache_dir=None, **kw) -> tuple[Gateway, MockBackend]:
    """Gateway wired to an in-process mock; responses carry provenance ``mock``."""
    backend = MockBackend(script)
    kw.setdefault("sleep", lambda s: None)
    gw = Gateway(base_url="http://mock.invalid/v1", cache_dir=cache_dir, transport=backend.transport(),
                 provenance="mock", **kw)
    return gw, backend


__all__ = [
    "API_KEY_ENV", "DEFAULT_BASE_URL", "DEFAULT_EMBEDDING_MODEL", "CacheEntry", "ChatRequest",
    "Completion", "Gateway", "GatewayError", "MockBackend", "MockScript", "MockServer",
    "RequestError", "ResponseCache", "RetryPolicy", "Rule", "TransportError", "cache_key",
    "hashed_embedding", "mock_gateway", "oracle_script",
]
