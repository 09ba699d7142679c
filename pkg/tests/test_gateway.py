from __future__ import annotations

import json
import math

import httpx
import pytest

from lexhop.errors import BackendUnavailableError, FixtureMissError, ProtocolError
from lexhop.gateway import (
    ChatGateway,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    MockBackend,
    OpenAICompatBackend,
    ResponseCache,
    RetryPolicy,
    UsageLedger,
    cache_key,
    ledger_report,
    request_digest,
)

REQ = ChatRequest(messages=(ChatMessage("user", "hello"),))


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(messages=())
    with pytest.raises(ValueError):
        ChatRequest(messages=(ChatMessage("user", "x"), ChatMessage("assistant", "y")))
    with pytest.raises(ValueError):
        ChatRequest(messages=(ChatMessage("user", "x"),), top_p=0.0)
    with pytest.raises(ValueError):
        ChatRequest(messages=(ChatMessage("user", "x"),), temperature=-1)


def test_request_defaults_match_run_configuration():
    assert REQ.temperature == 0.0
    assert REQ.top_p == 0.9


def test_response_invariants():
    ChatResponse("ab", (("a", -0.5), ("b", 0.0)), 3, 2)
    with pytest.raises(ProtocolError):
        ChatResponse("ab", (("a", 0.5), ("b", 0.0)), 3, 2)  # positive logprob
    with pytest.raises(ProtocolError):
        ChatResponse("abc", (("a", -0.5), ("b", 0.0)), 3, 2)  # concat mismatch
    with pytest.raises(ProtocolError):
        ChatResponse("ab", (("a", -0.5), ("b", 0.0)), 3, 5)  # count mismatch


def test_digest_sensitive_to_any_message_byte():
    other = ChatRequest(messages=(ChatMessage("user", "hello!"),))
    assert request_digest(REQ) != request_digest(other)
    assert cache_key("b", REQ) != cache_key("b", other)
    assert cache_key("b", REQ) != cache_key("c", REQ)
    assert cache_key("b", REQ, attempt=0) != cache_key("b", REQ, attempt=1)


def test_mock_scripting_and_fixture_roundtrip(tmp_path):
    mock = MockBackend()
    mock.script(REQ, "42", key_hint="answer")
    response = mock.send(REQ)
    assert response.text == "42"
    assert response.completion_tokens >= 1

    fixture = tmp_path / "fixture.jsonl"
    mock.write_fixture(fixture)
    replay = MockBackend.from_fixture(fixture)
    assert replay.send(REQ).text == "42"
    lines = [json.loads(l) for l in fixture.read_text(encoding="utf-8").splitlines()]
    assert lines[0]["request_digest"] == request_digest(REQ)
    assert lines[0]["key_hint"] == "answer"


def test_mock_queue_consumption_sticky_last():
    mock = MockBackend()
    mock.script(REQ, "first")
    mock.script(REQ, "second")
    assert mock.send(REQ).text == "first"
    assert mock.send(REQ).text == "second"
    assert mock.send(REQ).text == "second"
    assert mock.calls == 3


def test_mock_fixture_miss():
    mock = MockBackend()
    with pytest.raises(FixtureMissError):
        mock.send(REQ)


def test_mock_logprob_synthesis_and_scripted_probs():
    mock = MockBackend()
    request = ChatRequest(messages=(ChatMessage("user", "q"),), want_logprobs=True)
    mock.script(request, "two words")
    response = mock.send(request)
    assert "".join(t for t, _ in response.token_logprobs) == "two words"
    assert all(lp <= 0 for _, lp in response.token_logprobs)
    assert response.completion_tokens == len(response.token_logprobs)

    scripted = MockBackend()
    scripted.script(request, "10", token_probs=[("10", 0.5)])
    got = scripted.send(request)
    assert got.token_logprobs == (("10", math.log(0.5)),)


def test_mock_scripted_tokens_must_concatenate():
    mock = MockBackend()
    with pytest.raises(ValueError):
        mock.script(REQ, "abc", token_probs=[("ab", 1.0)])


def test_cache_idempotence(tmp_path):
    mock = MockBackend()
    mock.script(REQ, "cached")
    gateway = ChatGateway(mock, cache=ResponseCache(tmp_path))
    first = gateway.complete(REQ)
    second = gateway.complete(REQ)
    assert first == second
    assert mock.calls == 1
    cache_file = tmp_path / "mock" / f"{cache_key('mock', REQ)}.json"
    assert cache_file.exists()


def test_cache_attempt_ordinals_are_distinct(tmp_path):
    mock = MockBackend()
    mock.script(REQ, "first")
    mock.script(REQ, "second")
    gateway = ChatGateway(mock, cache=ResponseCache(tmp_path))
    assert gateway.complete(REQ, attempt=0).text == "first"
    assert gateway.complete(REQ, attempt=1).text == "second"
    assert mock.calls == 2
    # replay: both attempts now come from cache in their original roles
    assert gateway.complete(REQ, attempt=0).text == "first"
    assert gateway.complete(REQ, attempt=1).text == "second"
    assert mock.calls == 2


def test_ledger_math_and_stage_partition():
    ledger = UsageLedger()
    assert ledger_report(ledger)["total"] == {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
    ledger.record("generate", 10, 5)
    ledger.record("select", 10, 7)
    report = ledger_report(ledger)
    assert report["total"]["completion_tokens"] == 12
    assert report["stages"]["generate"]["completion_tokens"] == 5
    assert report["stages"]["select"]["completion_tokens"] == 7
    assert report["total"]["calls"] == 2


def test_gateway_records_usage_per_stage():
    mock = MockBackend()
    mock.script(REQ, "one two three")
    ledger = UsageLedger()
    gateway = ChatGateway(mock, ledger=ledger)
    gateway.complete(REQ, stage="answer")
    report = ledger.report()
    assert set(report["stages"]) == {"answer"}
    assert report["stages"]["answer"]["calls"] == 1


class FlakyBackend:
    def __init__(self, inner: MockBackend, failures: int):
        self.inner = inner
        self.id = inner.id
        self.failures = failures
        self.attempts = 0

    def send(self, request):
        self.attempts += 1
        if self.attempts <= self.failures:
            raise httpx.ConnectError("boom")
        return self.inner.send(request)


def test_retry_recovers_from_transient_failure():
    mock = MockBackend()
    mock.script(REQ, "ok")
    flaky = FlakyBackend(mock, failures=1)
    gateway = ChatGateway(flaky, retry=RetryPolicy(max_retries=2, backoff_seconds=0.0))
    assert gateway.complete(REQ).text == "ok"
    assert flaky.attempts == 2


def test_retry_exhaustion_raises_backend_unavailable():
    flaky = FlakyBackend(MockBackend(), failures=99)
    gateway = ChatGateway(flaky, retry=RetryPolicy(max_retries=2, backoff_seconds=0.0))
    with pytest.raises(BackendUnavailableError):
        gateway.complete(REQ)
    assert flaky.attempts == 3


def _http_backend(handler) -> OpenAICompatBackend:
    return OpenAICompatBackend(
        base_url="http://backend.test/v1",
        model="test-model",
        transport=httpx.MockTransport(handler),
    )


def test_http_backend_parses_reply_and_logprobs():
    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content)
        assert payload["model"] == "test-model"
        assert payload["logprobs"] is True
        assert payload["temperature"] == 0.0
        assert payload["top_p"] == 0.9
        return httpx.Response(
            200,
            json={
                "choices": [
                    {
                        "message": {"content": "7"},
                        "logprobs": {"content": [{"token": "7", "logprob": -0.1}]},
                    }
                ],
                "usage": {"prompt_tokens": 11, "completion_tokens": 1},
            },
        )

    backend = _http_backend(handler)
    request = ChatRequest(messages=(ChatMessage("user", "q"),), want_logprobs=True)
    response = backend.send(request)
    assert response.text == "7"
    assert response.token_logprobs == (("7", -0.1),)
    assert response.prompt_tokens == 11


def test_http_backend_sends_api_key_from_environment(monkeypatch):
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["auth"] = request.headers.get("Authorization")
        return httpx.Response(
            200, json={"choices": [{"message": {"content": "ok"}}], "usage": {}}
        )

    monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
    _http_backend(handler).send(REQ)
    assert seen["auth"] == "Bearer sk-test"


def test_http_backend_retryable_status_becomes_transport_error():
    backend = _http_backend(lambda request: httpx.Response(503, text="down"))
    with pytest.raises(httpx.TransportError):
        backend.send(REQ)


def test_http_backend_malformed_reply_is_protocol_error():
    backend = _http_backend(lambda request: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(ProtocolError):
        backend.send(REQ)


def test_http_backend_missing_logprobs_is_protocol_error():
    backend = _http_backend(
        lambda request: httpx.Response(
            200, json={"choices": [{"message": {"content": "x"}}], "usage": {}}
        )
    )
    request = ChatRequest(messages=(ChatMessage("user", "q"),), want_logprobs=True)
    with pytest.raises(ProtocolError):
        backend.send(request)
