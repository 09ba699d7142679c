"""Prompt assembly from external template files plus few-shot fixtures.

Templates live under ``templates/<lang>/`` as plain text with named
placeholders (question, background, context, candidates); the few-shot
exemplars ship as editable JSON fixtures under ``fixtures/``. Section labels
(``Question:``, ``Answer:``, ``Reasoning:``, ...) are kept in English for
both languages so downstream parsers stay language-independent.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import Provision
from .gateway import ChatMessage, ChatRequest

_PACKAGE_ROOT = Path(__file__).parent

TEMPLATE_NAMES = (
    "sp_system",
    "cot_system",
    "generate_system",
    "select_system",
    "sp_query",
    "cot_query",
    "retrieval_sp_query",
    "retrieval_cot_query",
    "generate_query",
    "select_query",
    "judge",
)

# Per-stage completion budgets; part of every request, hence of cache keys.
MAX_TOKENS = {
    "sp": 1024,
    "cot": 1024,
    "answer": 1024,
    "generate": 1024,
    "select": 64,
    "judge": 512,
}

DEFAULT_CANDIDATE_CHAR_BUDGET = 1200


def join_background_question(background: str, question: str) -> str:
    """Single query string carrying both the scenario and the question."""
    return f"{background} {question}".strip()


def render_provision(provision: Provision) -> str:
    """Inline rendering used wherever a provision fills a context slot."""
    heading = f" ({provision.heading})" if provision.heading else ""
    return f"{provision.citation()}{heading} {provision.text}"


def format_candidates(texts: list[str], char_budget: int = DEFAULT_CANDIDATE_CHAR_BUDGET) -> str:
    """Number candidate passages 0..n-1, one per line, each capped in length."""
    return "\n".join(f"{i}: {text[:char_budget]}" for i, text in enumerate(texts))


@dataclass(frozen=True)
class PromptLibrary:
    lang: str
    templates: dict[str, str]
    fewshot: dict
    digests: dict[str, str]

    @classmethod
    def load(
        cls,
        lang: str = "ko",
        template_dir: str | Path | None = None,
        fewshot_path: str | Path | None = None,
    ) -> "PromptLibrary":
        template_dir = Path(template_dir) if template_dir else _PACKAGE_ROOT / "templates" / lang
        fewshot_path = (
            Path(fewshot_path) if fewshot_path else _PACKAGE_ROOT / "fixtures" / f"fewshot_{lang}.json"
        )
        templates = {}
        digests = {}
        for name in TEMPLATE_NAMES:
            raw = (template_dir / f"{name}.txt").read_text(encoding="utf-8")
            templates[name] = raw.rstrip("\n")
            digests[name] = hashlib.sha256(raw.encode("utf-8")).hexdigest()
        fewshot_raw = fewshot_path.read_text(encoding="utf-8")
        digests["fewshot"] = hashlib.sha256(fewshot_raw.encode("utf-8")).hexdigest()
        return cls(lang=lang, templates=templates, fewshot=json.loads(fewshot_raw), digests=digests)

    def exemplars(self, kind: str) -> list[dict]:
        return self.fewshot[kind]


def _compose(system: str, example_blocks: list[str], query: str) -> tuple[ChatMessage, ...]:
    parts = [f"<Example>\n{block}" for block in example_blocks]
    parts.append(f"<Query>\n{query}")
    return (ChatMessage("system", system), ChatMessage("user", "\n\n".join(parts)))


def build_sp_request(
    lib: PromptLibrary, background: str, question: str, model_tag: str = "default"
) -> ChatRequest:
    examples = [
        f"Question: {ex['question']}\nAnswer: {ex['answer']}" for ex in lib.exemplars("sp")
    ]
    query = lib.templates["sp_query"].format(
        question=join_background_question(background, question)
    )
    return ChatRequest(
        messages=_compose(lib.templates["sp_system"], examples, query),
        max_tokens=MAX_TOKENS["sp"],
        model_tag=model_tag,
    )


def build_cot_request(
    lib: PromptLibrary, background: str, question: str, model_tag: str = "default"
) -> ChatRequest:
    examples = [
        f"Question: {ex['question']}\nReasoning: {ex['reasoning']}\nAnswer: {ex['answer']}"
        for ex in lib.exemplars("cot")
    ]
    query = lib.templates["cot_query"].format(
        question=join_background_question(background, question)
    )
    return ChatRequest(
        messages=_compose(lib.templates["cot_system"], examples, query),
        max_tokens=MAX_TOKENS["cot"],
        model_tag=model_tag,
    )


def build_retrieval_request(
    lib: PromptLibrary,
    mode: str,
    background: str,
    question: str,
    context_texts: list[str],
    model_tag: str = "default",
) -> ChatRequest:
    """Retrieval-augmented answering prompt, SP- or CoT-flavored."""
    if mode not in ("sp", "cot"):
        raise ValueError(f"mode must be 'sp' or 'cot', got {mode!r}")
    if not context_texts:
        raise ValueError("context_texts must be non-empty")
    examples = []
    for ex in lib.exemplars("retrieval"):
        lines = [f"Question: {ex['question']}", f"Context: {ex['context']}"]
        if mode == "cot":
            lines.append(f"Reasoning: {ex['reasoning']}")
        lines.append(f"Answer: {ex['answer']}")
        examples.append("\n".join(lines))
    query = lib.templates[f"retrieval_{mode}_query"].format(
        question=join_background_question(background, question),
        context="\n".join(context_texts),
    )
    system = lib.templates["sp_system"] if mode == "sp" else lib.templates["cot_system"]
    return ChatRequest(
        messages=_compose(system, examples, query),
        max_tokens=MAX_TOKENS["answer"],
        model_tag=model_tag,
    )


def build_answer_request(
    lib: PromptLibrary,
    background: str,
    question: str,
    provisions: list[Provision],
    model_tag: str = "default",
) -> ChatRequest:
    """Final provision-grounded answer prompt (the SP-flavored retrieval one)."""
    return build_retrieval_request(
        lib, "sp", background, question, [render_provision(p) for p in provisions], model_tag
    )


def build_generation_request(
    lib: PromptLibrary, background: str, question: str, model_tag: str = "default"
) -> ChatRequest:
    examples = [
        f"Question: {ex['question']}\nAnswer: {ex['answer']}" for ex in lib.exemplars("generate")
    ]
    query = lib.templates["generate_query"].format(
        question=join_background_question(background, question)
    )
    return ChatRequest(
        messages=_compose(lib.templates["generate_system"], examples, query),
        max_tokens=MAX_TOKENS["generate"],
        model_tag=model_tag,
    )


def build_selection_request(
    lib: PromptLibrary,
    background: str,
    question: str,
    candidate_texts: list[str],
    char_budget: int = DEFAULT_CANDIDATE_CHAR_BUDGET,
    model_tag: str = "default",
) -> ChatRequest:
    if not candidate_texts:
        raise ValueError("candidate_texts must be non-empty")
    examples = []
    for ex in lib.exemplars("select"):
        examples.append(
            "\n".join(
                [
                    f"Background: {ex['background']}",
                    f"Question: {ex['question']}",
                    "Candidates:",
                    format_candidates(ex["candidates"], char_budget),
                    f"Answer: {ex['answer']}",
                ]
            )
        )
    query = lib.templates["select_query"].format(
        background=background,
        question=question,
        candidates=format_candidates(candidate_texts, char_budget),
    )
    return ChatRequest(
        messages=_compose(lib.templates["select_system"], examples, query),
        max_tokens=MAX_TOKENS["select"],
        model_tag=model_tag,
    )


def build_judge_request(
    lib: PromptLibrary,
    question: str,
    context: str,
    expected: str,
    prediction: str,
    model_tag: str = "default",
) -> ChatRequest:
    """Legal-fidelity judge prompt; always requests token logprobs."""
    content = lib.templates["judge"].format(
        question=question, context=context, answer=expected, prediction=prediction
    )
    return ChatRequest(
        messages=(ChatMessage("user", content),),
        max_tokens=MAX_TOKENS["judge"],
        want_logprobs=True,
        model_tag=model_tag,
    )
