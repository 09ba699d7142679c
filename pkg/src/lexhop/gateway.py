"""Chat-completion gateway: one client surface over HTTP and mock backends.

Responses are cached on disk, content-addressed by a digest of the backend
identity, the full request, and a call ordinal (the ordinal keeps same-prompt
retries and repeated judge samples from collapsing into a single cached
entry). Cache writes go to a temp file then an atomic rename, so concurrent
writers and interrupted runs never leave partial entries.

The mock backend replays scripted responses keyed by request digest. Multiple
scripts for the same digest form a queue consumed in call order (the last
entry is sticky), which lets tests exercise retry paths. An unmatched digest
is a hard error: the mock never fabricates a reply.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import (
    BackendUnavailableError,
    FixtureMissError,
    ProtocolError,
)

ROLES = ("system", "user", "assistant")

DEFAULT_TEMPERATURE = 0.0
DEFAULT_TOP_P = 0.9

_RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = 1024
    want_logprobs: bool = False
    model_tag: str = "default"

    def __post_init__(self):
        messages = tuple(
            m if isinstance(m, ChatMessage) else ChatMessage(*m) for m in self.messages
        )
        object.__setattr__(self, "messages", messages)
        if not messages:
            raise ValueError("a request needs at least one message")
        if messages[-1].role not in ("user", "system"):
            raise ValueError("final message must be a user or system turn")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def to_dict(self) -> dict:
        return {
            "messages": [[m.role, m.content] for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "want_logprobs": self.want_logprobs,
            "model_tag": self.model_tag,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    token_logprobs: tuple[tuple[str, float], ...] | None
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self):
        if self.token_logprobs is not None:
            pairs = tuple((str(t), float(lp)) for t, lp in self.token_logprobs)
            object.__setattr__(self, "token_logprobs", pairs)
            if any(lp > 0.0 for _, lp in pairs):
                raise ProtocolError("token logprobs must be <= 0")
            if "".join(t for t, _ in pairs) != self.text:
                raise ProtocolError("logprob tokens do not concatenate to the response text")
            if self.completion_tokens != len(pairs):
                raise ProtocolError("completion_tokens disagrees with token_logprobs length")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "token_logprobs": [list(p) for p in self.token_logprobs] if self.token_logprobs is not None else None,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChatResponse":
        logprobs = data.get("token_logprobs")
        return cls(
            text=data["text"],
            token_logprobs=tuple((t, lp) for t, lp in logprobs) if logprobs is not None else None,
            prompt_tokens=int(data["prompt_tokens"]),
            completion_tokens=int(data["completion_tokens"]),
        )


def request_digest(request: ChatRequest) -> str:
    """Digest of the request content alone; the mock fixture key."""
    blob = json.dumps(request.to_dict(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cache_key(backend_id: str, request: ChatRequest, attempt: int = 0) -> str:
    """Cache key over (backend identity, request content, call ordinal)."""
    blob = json.dumps(
        {"backend": backend_id, "attempt": attempt, "request": request.to_dict()},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class UsageRecord:
    stage: str
    prompt_tokens: int
    completion_tokens: int


class UsageLedger:
    """Thread-safe accumulator of per-call token usage, grouped by stage."""

    def __init__(self):
        self._lock = threading.Lock()
        self.records: list[UsageRecord] = []

    def record(self, stage: str, prompt_tokens: int, completion_tokens: int) -> None:
        with self._lock:
            self.records.append(UsageRecord(stage, prompt_tokens, completion_tokens))

    def merge(self, other: "UsageLedger") -> None:
        with self._lock:
            self.records.extend(other.records)

    def totals(self) -> dict:
        report = self.report()
        return report["total"]

    def report(self) -> dict:
        """Per-stage call counts and token totals, plus a grand total."""
        stages: dict[str, dict] = {}
        total = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
        with self._lock:
            records = list(self.records)
        for rec in records:
            bucket = stages.setdefault(
                rec.stage, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
            )
            for target in (bucket, total):
                target["calls"] += 1
                target["prompt_tokens"] += rec.prompt_tokens
                target["completion_tokens"] += rec.completion_tokens
        return {"stages": stages, "total": total}

    def to_dicts(self) -> list[dict]:
        with self._lock:
            return [
                {"stage": r.stage, "prompt_tokens": r.prompt_tokens, "completion_tokens": r.completion_tokens}
                for r in self.records
            ]


def ledger_report(ledger: UsageLedger) -> dict:
    return ledger.report()


def _synth_tokens(text: str) -> tuple[tuple[str, float], ...]:
    """Alternating non-space/space runs; concatenation reproduces the text."""
    return tuple((chunk, 0.0) for chunk in re.findall(r"\S+|\s+", text))


def _estimate_prompt_tokens(request: ChatRequest) -> int:
    return sum(len(m.content.split()) for m in request.messages)


class MockBackend:
    """Deterministic scripted backend; the only backend tests ever need.

    Scripts map request digests to response queues. ``script()`` registers a
    response for a concrete request; ``from_fixture()`` loads the JSONL
    fixture format ``{"key_hint": str, "request_digest": str,
    "response": {...}}``.
    """

    def __init__(self, backend_id: str = "mock"):
        self.id = backend_id
        self._queues: dict[str, list[dict]] = {}
        self._cursors: dict[str, int] = {}
        self._hints: dict[str, str] = {}
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_fixture(cls, path: str | Path, backend_id: str = "mock") -> "MockBackend":
        backend = cls(backend_id)
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                backend._enqueue(entry["request_digest"], entry["response"], entry.get("key_hint", ""))
        return backend

    def _enqueue(self, digest: str, response: dict, key_hint: str = "") -> None:
        with self._lock:
            self._queues.setdefault(digest, []).append(response)
            if key_hint:
                self._hints[digest] = key_hint

    def script(
        self,
        request: ChatRequest,
        text: str,
        token_probs: list[tuple[str, float]] | None = None,
        prompt_tokens: int | None = None,
        key_hint: str = "",
    ) -> str:
        """Register a reply for this exact request; returns its digest.

        ``token_probs`` are (token, probability) pairs whose tokens must
        concatenate to ``text``; probabilities are stored as logprobs.
        """
        if token_probs is not None:
            if "".join(t for t, _ in token_probs) != text:
                raise ValueError("scripted tokens must concatenate to the scripted text")
            logprobs = [[t, math.log(p)] for t, p in token_probs]
        else:
            logprobs = None
        digest = request_digest(request)
        self._enqueue(
            digest,
            {
                "text": text,
                "token_logprobs": logprobs,
                "prompt_tokens": prompt_tokens,
            },
            key_hint,
        )
        return digest

    def write_fixture(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            with self._lock:
                for digest, queue in self._queues.items():
                    for response in queue:
                        fh.write(
                            json.dumps(
                                {
                                    "key_hint": self._hints.get(digest, ""),
                                    "request_digest": digest,
                                    "response": response,
                                },
                                ensure_ascii=False,
                            )
                            + "\n"
                        )

    def send(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        with self._lock:
            queue = self._queues.get(digest)
            if not queue:
                hint = f" (scripted hints: {sorted(self._hints.values())})" if self._hints else ""
                raise FixtureMissError(f"no scripted response for request digest {digest}{hint}")
            cursor = self._cursors.get(digest, 0)
            entry = queue[min(cursor, len(queue) - 1)]
            self._cursors[digest] = cursor + 1
            self.calls += 1
        text = entry["text"]
        logprobs = entry.get("token_logprobs")
        if request.want_logprobs:
            pairs = tuple((t, lp) for t, lp in logprobs) if logprobs is not None else _synth_tokens(text)
        else:
            pairs = None
        prompt_tokens = entry.get("prompt_tokens") or _estimate_prompt_tokens(request)
        completion = len(pairs) if pairs is not None else max(1, len(text.split()))
        return ChatResponse(
            text=text,
            token_logprobs=pairs,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion,
        )


class OpenAICompatBackend:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.id = f"openai-compat:{model}@{self.base_url}"
        self.calls = 0
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def send(self, request: ChatRequest) -> ChatResponse:
        model = self.model if request.model_tag in ("", "default") else request.model_tag
        payload = {
            "model": model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        if request.want_logprobs:
            payload["logprobs"] = True
        self.calls += 1
        resp = self._client.post(
            f"{self.base_url}/chat/completions", json=payload, headers=self._headers()
        )
        if resp.status_code in _RETRYABLE_STATUS:
            raise httpx.TransportError(f"retryable status {resp.status_code}")
        if resp.status_code != 200:
            raise ProtocolError(f"provider returned {resp.status_code}: {resp.text[:500]}")
        return self._parse(resp.json(), request.want_logprobs)

    @staticmethod
    def _parse(body: dict, want_logprobs: bool) -> ChatResponse:
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
            usage = body.get("usage") or {}
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed provider reply: {exc!r}") from exc
        if text is None:
            raise ProtocolError("provider reply has no message content")
        pairs = None
        if want_logprobs:
            content = ((choice.get("logprobs") or {}).get("content")) or None
            if content is None:
                raise ProtocolError("logprobs requested but missing from provider reply")
            pairs = tuple((item["token"], float(item["logprob"])) for item in content)
        completion = usage.get("completion_tokens")
        if completion is None:
            completion = len(pairs) if pairs is not None else max(1, len(text.split()))
        if pairs is not None:
            completion = len(pairs)
        return ChatResponse(
            text=text,
            token_logprobs=pairs,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(completion),
        )


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


class ResponseCache:
    """One JSON file per key under ``<cache_dir>/<backend_id>/``."""

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir)

    def _path(self, backend_id: str, key: str) -> Path:
        return self.root / _sanitize(backend_id) / f"{key}.json"

    def get(self, backend_id: str, key: str) -> ChatResponse | None:
        path = self._path(backend_id, key)
        if not path.exists():
            return None
        return ChatResponse.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, backend_id: str, key: str, response: ChatResponse) -> None:
        path = self._path(backend_id, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(json.dumps(response.to_dict(), ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)


@dataclass
class RetryPolicy:
    max_retries: int = 2
    backoff_seconds: float = 0.25

    def delays(self):
        for i in range(self.max_retries):
            yield self.backoff_seconds * (2**i)


class ChatGateway:
    """Caching, retrying, concurrency-bounded front over one backend."""

    def __init__(
        self,
        backend,
        cache: ResponseCache | None = None,
        retry: RetryPolicy | None = None,
        max_inflight: int = 4,
        ledger: UsageLedger | None = None,
    ):
        self.backend = backend
        self.cache = cache
        self.retry = retry or RetryPolicy()
        self.ledger = ledger
        self._inflight = threading.Semaphore(max_inflight)

    def complete(
        self,
        request: ChatRequest,
        stage: str = "default",
        attempt: int = 0,
        ledger: UsageLedger | None = None,
    ) -> ChatResponse:
        """Serve from cache or call the backend, recording usage either way.

        Cache hits are recorded in the ledger too, so replayed runs report
        the same accounting as the runs that populated the cache.
        """
        key = cache_key(self.backend.id, request, attempt)
        response = self.cache.get(self.backend.id, key) if self.cache else None
        if response is None:
            response = self._call_with_retries(request)
            if self.cache:
                self.cache.put(self.backend.id, key, response)
        target = ledger if ledger is not None else self.ledger
        if target is not None:
            target.record(stage, response.prompt_tokens, response.completion_tokens)
        return response

    def _call_with_retries(self, request: ChatRequest) -> ChatResponse:
        delays = list(self.retry.delays()) + [None]
        last_error: Exception | None = None
        for delay in delays:
            with self._inflight:
                try:
                    return self.backend.send(request)
                except httpx.TransportError as exc:
                    last_error = exc
            if delay is not None:
                time.sleep(delay)
        raise BackendUnavailableError(
            f"backend {self.backend.id} unavailable after {self.retry.max_retries + 1} attempts: {last_error}"
        )
