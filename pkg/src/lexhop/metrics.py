"""Evaluation metrics: provision-set EM/F-1, token-level F-1, judge scoring.

Provision scoring compares predicted and gold id sets:

    precision = |P ∩ G| / |P|   (0 when P is empty)
    recall    = |P ∩ G| / |G|
    f1        = harmonic mean, 0 when precision + recall = 0
    em        = 1 iff P == G

Token F-1 applies the same harmonic form to *sets* of whitespace tokens taken
from normalized answers. Note this deliberately differs from the SQuAD
convention, which counts token multiplicity; here repeated tokens collapse.

The judge score samples an integer grade in 1..10 n times (default 10) and
weights each grade by the probability of the tokens that spell it:

    value = (1/n) · Σ s_i · p(s_i)

so a judge that is certain (p = 1) of grade s on every sample yields exactly
s, and uncertainty only ever pulls the value down.
"""
from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from typing import Sequence

from .corpus import Provision
from .dataset import QAInstance
from .errors import JoinError, UnsupportedBackendError
from .gateway import ChatGateway, ChatResponse, UsageLedger
from .prompts import PromptLibrary, build_judge_request, render_provision

_WS_RE = re.compile(r"\s+")
_INT_RE = re.compile(r"\d+")


@dataclass(frozen=True)
class ProvisionScore:
    precision: float
    recall: float
    f1: float
    em: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "em": self.em}


@dataclass(frozen=True)
class TokenScore:
    f1: float

    def to_dict(self) -> dict:
        return {"f1": self.f1}


def provision_score(pred: Sequence[str] | frozenset[str], gold: Sequence[str] | frozenset[str]) -> ProvisionScore:
    """Set overlap between predicted and gold provision ids."""
    pred_set, gold_set = set(pred), set(gold)
    if not gold_set:
        raise ValueError("gold provision set must be non-empty")
    overlap = len(pred_set & gold_set)
    precision = overlap / len(pred_set) if pred_set else 0.0
    recall = overlap / len(gold_set)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ProvisionScore(precision=precision, recall=recall, f1=f1, em=int(pred_set == gold_set))


def normalize_answer(text: str, lang: str = "ko") -> str:
    """NFKC, lowercase, punctuation replaced by spaces, whitespace collapsed.

    Hangul (and all other letters) pass through untouched; only unicode
    punctuation is stripped, with no stemming or morphological analysis.
    """
    text = unicodedata.normalize("NFKC", text).lower()
    text = "".join(" " if unicodedata.category(c).startswith("P") else c for c in text)
    return _WS_RE.sub(" ", text).strip()


def token_f1(pred: str, gold: str, lang: str = "ko") -> TokenScore:
    """F-1 over sets of whitespace tokens from the normalized answers."""
    pred_tokens = set(normalize_answer(pred, lang).split())
    gold_tokens = set(normalize_answer(gold, lang).split())
    overlap = len(pred_tokens & gold_tokens)
    precision = overlap / len(pred_tokens) if pred_tokens else 0.0
    recall = overlap / len(gold_tokens) if gold_tokens else 0.0
    if precision + recall == 0:
        return TokenScore(f1=0.0)
    return TokenScore(f1=2 * precision * recall / (precision + recall))


@dataclass(frozen=True)
class JudgeSample:
    s: int
    p: float
    raw_text: str
    parse_failed: bool = False

    def __post_init__(self):
        if not 1 <= self.s <= 10:
            raise ValueError(f"judge grade must be in 1..10, got {self.s}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"grade probability must be in [0, 1], got {self.p}")

    def to_dict(self) -> dict:
        return {"s": self.s, "p": self.p, "parse_failed": self.parse_failed}


@dataclass(frozen=True)
class LfEvalScore:
    value: float
    samples: tuple[JudgeSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    @classmethod
    def from_samples(cls, samples: Sequence[JudgeSample]) -> "LfEvalScore":
        if not samples:
            raise ValueError("at least one judge sample is required")
        value = sum(sample.s * sample.p for sample in samples) / len(samples)
        return cls(value=value, samples=tuple(samples))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "value_x10": self.value * 10,
            "samples": [s.to_dict() for s in self.samples],
        }


def parse_judge_sample(response: ChatResponse) -> JudgeSample:
    """Extract the first 1..10 integer from a judge reply plus its probability.

    The probability is the joint probability of all logprob tokens overlapping
    the matched digits (a two-token "1"+"0" spelling of 10 multiplies out).
    A reply with no in-range integer contributes nothing: s=1, p=0, flagged.
    """
    if response.token_logprobs is None:
        raise UnsupportedBackendError("judge scoring needs token logprobs")
    match = None
    for candidate in _INT_RE.finditer(response.text):
        if 1 <= int(candidate.group()) <= 10:
            match = candidate
            break
    if match is None:
        return JudgeSample(s=1, p=0.0, raw_text=response.text, parse_failed=True)
    start, end = match.span()
    logprob_sum = 0.0
    offset = 0
    for token, logprob in response.token_logprobs:
        token_start, token_end = offset, offset + len(token)
        if token_start < end and token_end > start:
            logprob_sum += logprob
        offset = token_end
    return JudgeSample(s=int(match.group()), p=math.exp(logprob_sum), raw_text=response.text)


def lf_eval(
    judge: ChatGateway,
    lib: PromptLibrary,
    question_with_background: str,
    context_provisions: Sequence[Provision | str],
    expected: str,
    prediction: str,
    n_samples: int = 10,
    ledger: UsageLedger | None = None,
) -> LfEvalScore:
    """Run the judge prompt ``n_samples`` times and weight grades by certainty.

    Each sample is issued under its own call ordinal so cached replays keep
    the samples distinct.
    """
    context = "\n".join(
        render_provision(p) if isinstance(p, Provision) else str(p) for p in context_provisions
    )
    request = build_judge_request(lib, question_with_background, context, expected, prediction)
    samples = []
    for i in range(n_samples):
        response = judge.complete(request, stage="judge", attempt=i, ledger=ledger)
        samples.append(parse_judge_sample(response))
    return LfEvalScore.from_samples(samples)


def hop_breakdown(
    scores: dict[str, dict[str, float | None]],
    instances: Sequence[QAInstance],
) -> dict[str, dict]:
    """Aggregate per-instance metric values by reasoning depth.

    ``scores`` maps instance id to metric values (None = metric not
    applicable); every scored id must join to an instance. Returns one group
    per hop level plus an ``overall`` row, each with its result count and the
    mean of every metric over the results where it is present.
    """
    by_id = {inst.id: inst for inst in instances}
    groups: dict[str, list[dict[str, float | None]]] = {"1": [], "2": [], "3": [], "overall": []}
    for instance_id, metric_values in scores.items():
        instance = by_id.get(instance_id)
        if instance is None:
            raise JoinError(f"result {instance_id!r} does not join to any instance")
        groups[str(instance.hops)].append(metric_values)
        groups["overall"].append(metric_values)
    metric_names: list[str] = []
    for metric_values in scores.values():
        for name in metric_values:
            if name not in metric_names:
                metric_names.append(name)
    report: dict[str, dict] = {}
    for group, rows in groups.items():
        means: dict[str, float | None] = {}
        for name in metric_names:
            values = [row[name] for row in rows if row.get(name) is not None]
            means[name] = sum(values) / len(values) if values else None
        report[group] = {"n": len(rows), "means": means}
    return report
