"""BM25 inverted index over a provision store.

Okapi scoring with the idf floored at zero:

    idf(t)        = max(0, ln((N - df + 0.5) / (df + 0.5)))
    score(q, d)   = sum over query tokens t of
                    idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))

Zero-score documents are never returned, even when that leaves fewer than k
results: padding with irrelevant provisions would only pollute reranking.
Ties are broken by provision id so ranked lists are fully deterministic.

The default tokenizer emits whitespace tokens plus character bigrams of each
token, which keeps matching usable for agglutinative Korean text without a
morphological analyzer.
"""
from __future__ import annotations

import json
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from .corpus import ProvisionStore

FORMAT_VERSION = "bm25-index/1"

TOKENIZER_MODES = ("whitespace", "char_bigram", "whitespace_plus_bigram")


@dataclass(frozen=True)
class TokenizerConfig:
    mode: str = "whitespace_plus_bigram"
    lowercase: bool = True
    strip_punct: bool = False

    def __post_init__(self):
        if self.mode not in TOKENIZER_MODES:
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "lowercase": self.lowercase, "strip_punct": self.strip_punct}

    @classmethod
    def from_dict(cls, data: dict) -> "TokenizerConfig":
        return cls(**data)


def _bigrams(token: str) -> list[str]:
    if len(token) < 2:
        return [token]
    return [token[i : i + 2] for i in range(len(token) - 1)]


def tokenize(text: str, config: TokenizerConfig) -> list[str]:
    """Deterministic tokenization; empty input yields an empty list."""
    if config.lowercase:
        text = text.lower()
    if config.strip_punct:
        text = "".join(c for c in text if not unicodedata.category(c).startswith("P"))
    words = text.split()
    if config.mode == "whitespace":
        return words
    if config.mode == "char_bigram":
        return [b for w in words for b in _bigrams(w)]
    return words + [b for w in words for b in _bigrams(w)]


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError(f"k1 must be positive, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")

    def to_dict(self) -> dict:
        return {"k1": self.k1, "b": self.b}


@dataclass(frozen=True)
class RetrievalCandidate:
    provision_id: str
    score: float
    rank: int


class Retriever(Protocol):
    """Ranked retrieval contract: query text and scope k in, candidates out.

    The shipped implementation is sparse BM25; dense or hybrid retrievers can
    be swapped in behind the same contract.
    """

    def query(self, text: str, k: int) -> list[RetrievalCandidate]: ...


class Bm25Index:
    """Immutable inverted index; safe for concurrent queries after build."""

    def __init__(
        self,
        doc_ids: list[str],
        doc_lengths: list[int],
        avg_doc_length: float,
        postings: dict[str, list[tuple[int, int]]],
        tokenizer: TokenizerConfig,
        params: Bm25Params,
    ):
        self.doc_ids = doc_ids
        self.doc_lengths = doc_lengths
        self.avg_doc_length = avg_doc_length
        self.postings = postings
        self.tokenizer = tokenizer
        self.params = params

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        import math

        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        return max(0.0, math.log((self.doc_count - df + 0.5) / (df + 0.5)))

    def query(self, text: str, k: int) -> list[RetrievalCandidate]:
        """Top-k provisions by BM25 score, descending, ties broken by id.

        Returns fewer than k candidates only when fewer than k documents
        score above zero.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        tokens = tokenize(text, self.tokenizer)
        k1, b = self.params.k1, self.params.b
        scores: dict[int, float] = defaultdict(float)
        for token in tokens:
            posting = self.postings.get(token)
            if not posting:
                continue
            idf = self.idf(token)
            if idf == 0.0:
                continue
            for doc_idx, tf in posting:
                dl = self.doc_lengths[doc_idx]
                norm = tf + k1 * (1.0 - b + b * dl / self.avg_doc_length)
                scores[doc_idx] += idf * tf * (k1 + 1.0) / norm
        ranked = sorted(
            ((s, self.doc_ids[i]) for i, s in scores.items() if s > 0.0),
            key=lambda pair: (-pair[0], pair[1]),
        )
        return [
            RetrievalCandidate(provision_id=doc_id, score=score, rank=rank)
            for rank, (score, doc_id) in enumerate(ranked[:k], start=1)
        ]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "tokenizer": self.tokenizer.to_dict(),
            "params": self.params.to_dict(),
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths,
            "avg_doc_length": self.avg_doc_length,
            "postings": {term: [list(p) for p in posting] for term, posting in self.postings.items()},
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "Bm25Index":
        if data.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported index format {data.get('format')!r}")
        return cls(
            doc_ids=list(data["doc_ids"]),
            doc_lengths=list(data["doc_lengths"]),
            avg_doc_length=data["avg_doc_length"],
            postings={term: [(int(i), int(tf)) for i, tf in posting] for term, posting in data["postings"].items()},
            tokenizer=TokenizerConfig.from_dict(data["tokenizer"]),
            params=Bm25Params(**data["params"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_index(
    store: ProvisionStore | Iterable,
    tokenizer: TokenizerConfig | None = None,
    params: Bm25Params | None = None,
) -> Bm25Index:
    """Build an index over the store's provisions in ingestion order."""
    tokenizer = tokenizer or TokenizerConfig()
    params = params or Bm25Params()
    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    for provision in store:
        doc_idx = len(doc_ids)
        doc_ids.append(provision.id)
        tokens = tokenize(provision.text, tokenizer)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for token, tf in counts.items():
            postings.setdefault(token, []).append((doc_idx, tf))
    if not doc_ids:
        raise ValueError("cannot build an index over an empty store")
    avg_doc_length = sum(doc_lengths) / len(doc_lengths)
    return Bm25Index(doc_ids, doc_lengths, avg_doc_length, postings, tokenizer, params)
