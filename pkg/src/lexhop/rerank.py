"""Cross-encoder reranking stage behind a pluggable pair-scorer contract.

Three scorers cover every mode the pipeline runs in:

* ``RemoteScorer``   — HTTP client for a pair-scoring service,
* ``ScriptedScorer`` — fixed text -> score mapping for tests,
* ``PassthroughScorer`` — preserves the incoming (retrieval) order, which is
  both the no-service fallback and the reranking-disabled ablation.
"""
from __future__ import annotations

import math
import threading
import time
from typing import NamedTuple, Protocol, Sequence

import httpx

from .errors import BackendUnavailableError, ProtocolError


class Scorer(Protocol):
    def score_pairs(self, query: str, texts: Sequence[str]) -> list[float]: ...


class ScoredPassage(NamedTuple):
    provision_id: str
    score: float


class PassthroughScorer:
    """Scores by negated input position, so ordering is untouched."""

    def score_pairs(self, query: str, texts: Sequence[str]) -> list[float]:
        return [-float(i) for i in range(len(texts))]


class ScriptedScorer:
    """Fixed mapping from passage text to score; unknown text is an error."""

    def __init__(self, scores: dict[str, float]):
        self._scores = dict(scores)

    def score_pairs(self, query: str, texts: Sequence[str]) -> list[float]:
        try:
            return [float(self._scores[t]) for t in texts]
        except KeyError as exc:
            raise ProtocolError(f"scripted scorer has no score for text {exc.args[0]!r}") from None


class RemoteScorer:
    """Client for the ``POST /rerank`` pair-scoring protocol.

    Request ``{"query": str, "passages": [str]}``; response
    ``{"scores": [float]}`` with ``scores[i]`` scoring ``passages[i]``.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff_seconds: float = 0.25,
        max_inflight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._inflight = threading.Semaphore(max_inflight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def healthy(self) -> bool:
        try:
            return self._client.get(f"{self.base_url}/healthz").status_code == 200
        except httpx.TransportError:
            return False

    def score_pairs(self, query: str, texts: Sequence[str]) -> list[float]:
        payload = {"query": query, "passages": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * (2 ** (attempt - 1)))
            with self._inflight:
                try:
                    resp = self._client.post(f"{self.base_url}/rerank", json=payload)
                except httpx.TransportError as exc:
                    last_error = exc
                    continue
            if resp.status_code != 200:
                raise ProtocolError(f"rerank service returned {resp.status_code}: {resp.text[:500]}")
            body = resp.json()
            scores = body.get("scores")
            if not isinstance(scores, list) or len(scores) != len(texts):
                raise ProtocolError(
                    f"rerank service returned {len(scores) if isinstance(scores, list) else 'no'} "
                    f"scores for {len(texts)} passages"
                )
            return [float(s) for s in scores]
        raise BackendUnavailableError(f"rerank service at {self.base_url} unavailable: {last_error}")


def score_pairs(scorer: Scorer, query: str, texts: Sequence[str]) -> list[float]:
    """Score each text against the query; one finite real per text."""
    if not texts:
        raise ValueError("texts must be non-empty")
    scores = scorer.score_pairs(query, texts)
    if len(scores) != len(texts):
        raise ProtocolError(f"scorer returned {len(scores)} scores for {len(texts)} texts")
    if any(not math.isfinite(s) for s in scores):
        raise ProtocolError("scorer returned a non-finite score")
    return scores


def rerank(
    scorer: Scorer,
    query: str,
    passages: Sequence[tuple[str, str]],
    l: int,
) -> list[ScoredPassage]:
    """Top-l passages by scorer relevance, descending, ties broken by id.

    ``passages`` are (provision_id, text) pairs in retrieval order; when l
    exceeds the candidate count, all candidates come back reordered.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    if not passages:
        raise ValueError("passages must be non-empty")
    ids = [pid for pid, _ in passages]
    if len(set(ids)) != len(ids):
        raise ValueError("passage ids must be unique")
    scores = score_pairs(scorer, query, [text for _, text in passages])
    ranked = sorted(
        (ScoredPassage(pid, score) for (pid, _), score in zip(passages, scores)),
        key=lambda sp: (-sp.score, sp.provision_id),
    )
    return ranked[:l]
