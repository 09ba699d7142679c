"""Non-iterative comparison methods sharing the gateway and the index.

Standard prompting answers directly, chain-of-thought adds a structured
``Reasoning:`` / ``Answer:`` reply, and one-time retrieval augments either of
them with the top-n provisions for the raw background+question, where n is
the instance's hop count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import ProvisionStore
from .dataset import QAInstance
from .errors import LexhopError
from .gateway import ChatGateway, UsageLedger
from .prompts import (
    PromptLibrary,
    build_cot_request,
    build_retrieval_request,
    build_sp_request,
    join_background_question,
    render_provision,
)
from .sparse import Retriever

BASELINE_KINDS = ("sp", "cot", "or_sp", "or_cot")

_ANSWER_MARKER = "Answer:"
_REASONING_MARKER = "Reasoning:"


class RetrievalShortfallError(LexhopError):
    """One-time retrieval found no provision at all for the query."""


@dataclass
class CotResult:
    reasoning: str
    answer: str
    parse_warning: bool = False


@dataclass
class OneTimeRetrievalResult:
    answer: str
    retrieved_ids: list[str] = field(default_factory=list)
    reasoning: str = ""
    parse_warning: bool = False


def parse_cot_sections(text: str) -> CotResult:
    """Split a reply into reasoning and answer around the ``Answer:`` marker.

    A missing marker returns the whole text as the answer, flagged, so a
    mis-formatted reply is never silently dropped.
    """
    marker_at = text.find(_ANSWER_MARKER)
    if marker_at == -1:
        return CotResult(reasoning="", answer=text.strip(), parse_warning=True)
    reasoning = text[:marker_at]
    if reasoning.lstrip().startswith(_REASONING_MARKER):
        reasoning = reasoning.lstrip()[len(_REASONING_MARKER) :]
    answer = text[marker_at + len(_ANSWER_MARKER) :]
    return CotResult(reasoning=reasoning.strip(), answer=answer.strip(), parse_warning=False)


def run_sp(
    gateway: ChatGateway,
    lib: PromptLibrary,
    instance: QAInstance,
    ledger: UsageLedger | None = None,
    model_tag: str = "default",
) -> str:
    """Few-shot direct answering; no retrieval involved."""
    request = build_sp_request(lib, instance.background, instance.question, model_tag)
    response = gateway.complete(request, stage="answer", ledger=ledger)
    return response.text.strip()


def run_cot(
    gateway: ChatGateway,
    lib: PromptLibrary,
    instance: QAInstance,
    ledger: UsageLedger | None = None,
    model_tag: str = "default",
) -> CotResult:
    """Few-shot reasoning-then-answer; only the answer reaches the metrics."""
    request = build_cot_request(lib, instance.background, instance.question, model_tag)
    response = gateway.complete(request, stage="answer", ledger=ledger)
    return parse_cot_sections(response.text)


def run_one_time_retrieval(
    gateway: ChatGateway,
    lib: PromptLibrary,
    index: Retriever,
    store: ProvisionStore,
    instance: QAInstance,
    mode: str = "sp",
    ledger: UsageLedger | None = None,
    model_tag: str = "default",
) -> OneTimeRetrievalResult:
    """Retrieve top-n provisions once (n = hop count) and answer over them.

    Fewer than n provisions may come back when the corpus has fewer nonzero
    matches; the ids are returned as-is, never padded.
    """
    if mode not in ("sp", "cot"):
        raise ValueError(f"mode must be 'sp' or 'cot', got {mode!r}")
    query = join_background_question(instance.background, instance.question)
    candidates = index.query(query, instance.hops)
    if not candidates:
        raise RetrievalShortfallError(
            f"instance {instance.id}: one-time retrieval found no matching provision"
        )
    retrieved_ids = [c.provision_id for c in candidates]
    context = [render_provision(store.lookup(pid)) for pid in retrieved_ids]
    request = build_retrieval_request(
        lib, mode, instance.background, instance.question, context, model_tag
    )
    response = gateway.complete(request, stage="answer", ledger=ledger)
    if mode == "cot":
        parsed = parse_cot_sections(response.text)
        return OneTimeRetrievalResult(
            answer=parsed.answer,
            retrieved_ids=retrieved_ids,
            reasoning=parsed.reasoning,
            parse_warning=parsed.parse_warning,
        )
    return OneTimeRetrievalResult(answer=response.text.strip(), retrieved_ids=retrieved_ids)
