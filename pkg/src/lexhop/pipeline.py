"""Provision-guided multi-hop retrieval pipeline.

One run has three stages. The model first drafts *parametric provisions*,
statute-like texts written purely from its own knowledge; each one is used
only as a retrieval query, never as evidence. Every draft then goes through
retrieve (BM25 top-k), rerank (pair scorer top-l), and select (the model
picks one of the l candidates). The selected provisions, deduplicated in
first-occurrence order, ground the final answer prompt.

Each stage can be ablated independently: no reranking (take the first l
retrieval candidates), no selection (take the rerank top-1), and no draft
generation (retrieve directly with background+question, taking as many
provisions as the instance has hops).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import json
import re

from .corpus import ProvisionStore
from .dataset import QAInstance
from .errors import BackendUnavailableError, LexhopError
from .gateway import ChatGateway, UsageLedger
from .prompts import (
    DEFAULT_CANDIDATE_CHAR_BUDGET,
    PromptLibrary,
    build_answer_request,
    build_generation_request,
    build_selection_request,
    join_background_question,
)
from .rerank import PassthroughScorer, Scorer, rerank
from .sparse import Retriever

_LIST_RE = re.compile(r"\[.*\]", re.DOTALL)
_INT_RE = re.compile(r"-?\d+")


class PipelineStageError(LexhopError):
    """A pipeline stage could not produce its contract for this instance."""


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 100
    l: int = 10
    ablate_rerank: bool = False
    ablate_selection: bool = False
    ablate_provision: bool = False
    max_parametric: int = 5
    candidate_char_budget: int = DEFAULT_CANDIDATE_CHAR_BUDGET
    scorer_fallback: bool = False
    model_tag: str = "default"

    def __post_init__(self):
        if self.k < 1 or self.l < 1:
            raise ValueError("k and l must be positive")
        if self.l >= self.k:
            raise ValueError(f"l must be smaller than k, got l={self.l}, k={self.k}")
        if self.max_parametric < 1:
            raise ValueError("max_parametric must be positive")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "l": self.l,
            "ablate_rerank": self.ablate_rerank,
            "ablate_selection": self.ablate_selection,
            "ablate_provision": self.ablate_provision,
            "max_parametric": self.max_parametric,
            "candidate_char_budget": self.candidate_char_budget,
            "scorer_fallback": self.scorer_fallback,
            "model_tag": self.model_tag,
        }


@dataclass(frozen=True)
class ParametricProvision:
    ordinal: int
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("parametric provision text must be non-empty")

    def to_dict(self) -> dict:
        return {"ordinal": self.ordinal, "text": self.text}


@dataclass(frozen=True)
class HopEvidence:
    parametric: ParametricProvision
    topk_ids: tuple[str, ...]
    topl_ids: tuple[str, ...]
    selected_id: str
    fallback_used: bool = False

    def __post_init__(self):
        object.__setattr__(self, "topk_ids", tuple(self.topk_ids))
        object.__setattr__(self, "topl_ids", tuple(self.topl_ids))
        if not set(self.topl_ids) <= set(self.topk_ids):
            raise ValueError("top-l ids must be a subset of top-k ids")
        if self.selected_id not in self.topl_ids:
            raise ValueError("selected id must come from the top-l ids")

    def to_dict(self) -> dict:
        return {
            "parametric": self.parametric.to_dict(),
            "topk_ids": list(self.topk_ids),
            "topl_ids": list(self.topl_ids),
            "selected_id": self.selected_id,
            "fallback_used": self.fallback_used,
        }


@dataclass
class PipelineTrace:
    instance_id: str
    parametric_provisions: list[ParametricProvision]
    evidences: list[HopEvidence]
    final_provision_ids: list[str]
    answer: str
    usage: list[dict]
    generation_fallback: bool = False
    scorer_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "parametric_provisions": [p.to_dict() for p in self.parametric_provisions],
            "evidences": [e.to_dict() for e in self.evidences],
            "final_provision_ids": list(self.final_provision_ids),
            "answer": self.answer,
            "usage": self.usage,
            "generation_fallback": self.generation_fallback,
            "scorer_fallback": self.scorer_fallback,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


@dataclass
class GenerationResult:
    provisions: list[ParametricProvision]
    fallback_used: bool = False
    retried: bool = False


@dataclass
class SelectionResult:
    index: int
    fallback_used: bool = False
    retried: bool = False


@lru_cache(maxsize=4)
def default_library(lang: str) -> PromptLibrary:
    return PromptLibrary.load(lang)


def _parse_string_list(text: str) -> list[str] | None:
    """First JSON list of non-empty strings in the text, or None."""
    match = _LIST_RE.search(text)
    if not match:
        return None
    try:
        parsed = json.loads(match.group())
    except json.JSONDecodeError:
        return None
    if not isinstance(parsed, list):
        return None
    items = [item.strip() for item in parsed if isinstance(item, str) and item.strip()]
    return items or None


def generate_parametric_provisions(
    gateway: ChatGateway,
    lib: PromptLibrary,
    background: str,
    question: str,
    max_n: int,
    ledger: UsageLedger | None = None,
    model_tag: str = "default",
) -> GenerationResult:
    """Draft up to ``max_n`` provision-like retrieval queries.

    One retry on an unparseable reply; a second failure degrades to a single
    draft equal to background+question so the pipeline always has a query.
    """
    request = build_generation_request(lib, background, question, model_tag)
    for attempt in (0, 1):
        response = gateway.complete(request, stage="generate", attempt=attempt, ledger=ledger)
        items = _parse_string_list(response.text)
        if items:
            provisions = [
                ParametricProvision(ordinal, text)
                for ordinal, text in enumerate(items[:max_n], start=1)
            ]
            return GenerationResult(provisions, fallback_used=False, retried=attempt == 1)
    fallback = ParametricProvision(1, join_background_question(background, question))
    return GenerationResult([fallback], fallback_used=True, retried=True)


def _parse_index(text: str, n_candidates: int) -> int | None:
    match = _INT_RE.search(text)
    if not match:
        return None
    index = int(match.group())
    if 0 <= index < n_candidates:
        return index
    return None


def select_provision(
    gateway: ChatGateway,
    lib: PromptLibrary,
    background: str,
    question: str,
    candidates: list[tuple[str, str]],
    char_budget: int = DEFAULT_CANDIDATE_CHAR_BUDGET,
    ledger: UsageLedger | None = None,
    model_tag: str = "default",
) -> SelectionResult:
    """Ask the model for the 0-based index of the best candidate passage.

    Out-of-range or non-integer replies get one retry; a second failure falls
    back to index 0 (the rerank top-1) with the fallback flag set.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    request = build_selection_request(
        lib, background, question, [text for _, text in candidates], char_budget, model_tag
    )
    for attempt in (0, 1):
        response = gateway.complete(request, stage="select", attempt=attempt, ledger=ledger)
        index = _parse_index(response.text, len(candidates))
        if index is not None:
            return SelectionResult(index, fallback_used=False, retried=attempt == 1)
    return SelectionResult(0, fallback_used=True, retried=True)


def answer_with_provisions(
    gateway: ChatGateway,
    lib: PromptLibrary,
    background: str,
    question: str,
    provisions: list,
    ledger: UsageLedger | None = None,
    model_tag: str = "default",
) -> str:
    """Final grounded answer with all provisions in the context slot."""
    if not provisions:
        raise ValueError("provisions must be non-empty")
    request = build_answer_request(lib, background, question, provisions, model_tag)
    response = gateway.complete(request, stage="answer", ledger=ledger)
    return response.text.strip()


def _dedupe(ids: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for provision_id in ids:
        if provision_id not in seen:
            seen.add(provision_id)
            out.append(provision_id)
    return out


def run_parser(
    gateway: ChatGateway,
    scorer: Scorer,
    index: Retriever,
    store: ProvisionStore,
    instance: QAInstance,
    config: PipelineConfig,
    lib: PromptLibrary | None = None,
) -> PipelineTrace:
    """Run the full pipeline on one instance and return its trace.

    Every model call lands in the trace's usage slice under a stage label
    from {generate, select, answer}.
    """
    lib = lib or default_library(instance.language)
    ledger = UsageLedger()
    background, question = instance.background, instance.question
    scorer_fell_back = False

    if config.ablate_provision:
        query_text = join_background_question(background, question)
        candidates = index.query(query_text, instance.hops)
        if not candidates:
            raise PipelineStageError(
                f"instance {instance.id}: no provisions retrieved for the direct query"
            )
        ids = [c.provision_id for c in candidates]
        parametrics = [ParametricProvision(i + 1, query_text) for i in range(len(ids))]
        evidences = [
            HopEvidence(parametric=parametrics[i], topk_ids=ids, topl_ids=ids, selected_id=ids[i])
            for i in range(len(ids))
        ]
        generation_fallback = False
    else:
        generation = generate_parametric_provisions(
            gateway, lib, background, question, config.max_parametric, ledger, config.model_tag
        )
        generation_fallback = generation.fallback_used
        parametrics = generation.provisions
        evidences = []
        for parametric in parametrics:
            candidates = index.query(parametric.text, config.k)
            if not candidates:
                raise PipelineStageError(
                    f"instance {instance.id}: no provisions retrieved for "
                    f"parametric provision {parametric.ordinal}"
                )
            topk_ids = [c.provision_id for c in candidates]
            passages = [(pid, store.lookup(pid).text) for pid in topk_ids]
            if config.ablate_rerank:
                topl = passages[: config.l]
            else:
                try:
                    ranked = rerank(scorer, parametric.text, passages, config.l)
                except BackendUnavailableError:
                    if not config.scorer_fallback:
                        raise
                    scorer_fell_back = True
                    ranked = rerank(PassthroughScorer(), parametric.text, passages, config.l)
                texts = dict(passages)
                topl = [(sp.provision_id, texts[sp.provision_id]) for sp in ranked]
            topl_ids = [pid for pid, _ in topl]
            if config.ablate_selection:
                selected_id = topl_ids[0]
                fallback_used = False
            else:
                selection = select_provision(
                    gateway,
                    lib,
                    background,
                    question,
                    topl,
                    config.candidate_char_budget,
                    ledger,
                    config.model_tag,
                )
                selected_id = topl_ids[selection.index]
                fallback_used = selection.fallback_used
            evidences.append(
                HopEvidence(
                    parametric=parametric,
                    topk_ids=topk_ids,
                    topl_ids=topl_ids,
                    selected_id=selected_id,
                    fallback_used=fallback_used,
                )
            )

    final_ids = _dedupe([e.selected_id for e in evidences])
    answer = answer_with_provisions(
        gateway,
        lib,
        background,
        question,
        [store.lookup(pid) for pid in final_ids],
        ledger,
        config.model_tag,
    )
    return PipelineTrace(
        instance_id=instance.id,
        parametric_provisions=list(parametrics),
        evidences=evidences,
        final_provision_ids=final_ids,
        answer=answer,
        usage=ledger.to_dicts(),
        generation_fallback=generation_fallback,
        scorer_fallback=scorer_fell_back,
    )
