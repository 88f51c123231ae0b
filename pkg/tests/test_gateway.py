import json
import logging

import httpx
import numpy as np
import pytest

from ambiscore.gateway import (
    ChatRequest,
    Gateway,
    MockScript,
    MockServer,
    RequestError,
    RetryPolicy,
    Rule,
    TransportError,
    cache_key,
    hashed_embedding,
)

REQ = ChatRequest("m", (("user", "hello"),), 0.0, 4)
FAST = RetryPolicy(max_attempts=3, base_delay=0.0, jitter=0.0)


def test_second_call_served_from_cache(mock_gw):
    gw, backend = mock_gw(MockScript(chat_default="4"))
    a = gw.chat_complete(REQ)
    calls = gw.network_calls
    b = gw.chat_complete(REQ)
    assert (a.text, a.cached, b.text, b.cached) == ("4", False, "4", True)
    assert gw.network_calls == calls == 1
    assert backend.requests["chat"] == 1
    assert a.provenance == b.provenance == "mock"


def test_cache_shared_across_gateways(tmp_path):
    script = MockScript(chat_default="2")
    with MockServer(script) as srv:
        Gateway(srv.base_url, tmp_path / "c", policy=FAST).chat_complete(REQ)
        gw2 = Gateway(srv.base_url, tmp_path / "c", policy=FAST)
        out = gw2.chat_complete(REQ)
        assert out.cached and gw2.network_calls == 0 and srv.backend.requests["chat"] == 1


def test_retry_then_success_over_http(tmp_path):
    script = MockScript(chat_default="5", failures={"chat": [503, 500]})
    with MockServer(script) as srv:
        gw = Gateway(srv.base_url, tmp_path / "c", policy=FAST, sleep=lambda s: None)
        out = gw.chat_complete(REQ)
    assert out.text == "5" and out.provenance == "network"
    assert gw.network_calls == 3


def test_retries_exhausted_carries_attempt_log(mock_gw):
    gw, _ = mock_gw(MockScript(failures={"chat": [503] * 5}), policy=FAST)
    with pytest.raises(TransportError) as ei:
        gw.chat_complete(REQ)
    assert len(ei.value.attempts) == 3 and "503" in ei.value.attempts[0]


def test_non_retryable_4xx(mock_gw):
    gw, backend = mock_gw(MockScript(failures={"chat": [401]}), policy=FAST)
    with pytest.raises(RequestError) as ei:
        gw.chat_complete(REQ)
    assert ei.value.status == 401 and backend.requests["chat"] == 1


def test_backoff_delays_are_seeded(mock_gw):
    slept = []
    gw, _ = mock_gw(MockScript(failures={"chat": [429, 429]}), sleep=slept.append,
                    policy=RetryPolicy(max_attempts=3, base_delay=1.0, jitter=0.25))
    gw.chat_complete(REQ)
    assert len(slept) == 2 and 0.75 <= slept[0] <= 1.25 and 1.5 <= slept[1] <= 2.5


@pytest.mark.parametrize("req", [
    ChatRequest("m", (("user", "x"),), 0.0, 0),
    ChatRequest("", (("user", "x"),)),
    ChatRequest("m", ()),
    ChatRequest("m", (("robot", "x"),)),
])
def test_invalid_request_before_network(mock_gw, req):
    gw, backend = mock_gw()
    with pytest.raises(RequestError):
        gw.chat_complete(req)
    assert gw.network_calls == 0 and sum(backend.requests.values()) == 0


def test_cache_write_failure_still_returns(mock_gw, monkeypatch, caplog):
    gw, _ = mock_gw(MockScript(chat_default="3"))

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(gw.cache, "put", boom)
    with caplog.at_level(logging.WARNING):
        assert gw.chat_complete(REQ).text == "3"
    assert "cache write failed" in caplog.text


def test_cache_key_is_content_addressed():
    k = cache_key("chat", "m", REQ.payload())
    assert len(k) == 64
    assert k == cache_key("chat", "m", json.loads(json.dumps(REQ.payload())))
    assert k != cache_key("chat", "m2", REQ.payload())
    assert k != cache_key("embedding", "m", REQ.payload())


def test_rule_sequences_and_model_filter(mock_gw):
    script = MockScript(chat_default="1", rules=[Rule(["hello"], ["oops", "2"]), Rule(["bye"], ["4"], model="x")])
    gw, _ = mock_gw(script, cache=False)
    assert [gw.chat_complete(REQ).text for _ in range(3)] == ["oops", "2", "2"]
    assert gw.chat_complete(ChatRequest("m", (("user", "bye"),))).text == "1"
    assert gw.chat_complete(ChatRequest("x", (("user", "bye"),))).text == "4"


def test_embed_contracts(mock_gw):
    gw, backend = mock_gw()
    a, b = gw.embed(["a", "a"])
    assert np.array_equal(a, b)
    vs = gw.embed(["one", "two", "three"])
    assert len(vs) == 3 and len({v.shape for v in vs}) == 1
    n = backend.requests["embedding"]
    gw.embed(["two"])
    assert backend.requests["embedding"] == n
    with pytest.raises(RequestError):
        gw.embed([])


def test_embed_dimension_mismatch(mock_gw):
    def handler(request):
        body = json.loads(request.content)
        data = [{"index": i, "embedding": [1.0] * (2 + i)} for i, _ in enumerate(body["input"])]
        return httpx.Response(200, json={"data": data})

    gw = Gateway("http://x/v1", None, transport=httpx.MockTransport(handler))
    with pytest.raises(Exception, match="dimension"):
        gw.embed(["p", "q"])


def test_embed_batches_large_inputs(mock_gw):
    gw, backend = mock_gw(cache=False)
    out = gw.embed([f"text {i}" for i in range(130)])
    assert len(out) == 130 and backend.requests["embedding"] == 3


def test_hashed_embedding_unit_norm():
    v = np.array(hashed_embedding("The bank of the river", 64))
    assert v.shape == (64,) and np.linalg.norm(v) == pytest.approx(1.0)
    assert hashed_embedding("x y", 64) == hashed_embedding("x y", 64)


def test_mock_stats_endpoint():
    with MockServer() as srv:
        gw = Gateway(srv.base_url, None, policy=FAST)
        gw.chat_complete(REQ)
        stats = httpx.get(srv.base_url + "/_mock/stats").json()
    assert stats["requests"]["chat"] == 1


def test_api_key_header(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "3"}}]})

    monkeypatch.setenv("AMBISCORE_API_KEY", "sk-test")
    Gateway("http://x/v1", None, transport=httpx.MockTransport(handler)).chat_complete(REQ)
    assert seen["auth"] == "Bearer sk-test"


def test_script_roundtrip(tmp_path):
    s = MockScript(chat_default="2", rules=[Rule(["a"], ["1"], "m")], embedding_dimension=16, failures={"chat": [500]})
    p = tmp_path / "s.json"
    p.write_text(json.dumps(s.to_dict()))
    assert MockScript.from_json(p) == s
