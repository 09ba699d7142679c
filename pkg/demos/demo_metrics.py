"""Walkthrough: the three evaluation metrics.

Provision-set F-1/EM over canonical ids, token-level F-1 over normalized
answers, and the probability-weighted judge score.

Run with: python demos/demo_metrics.py
"""
from __future__ import annotations

from lexhop import (
    ChatGateway,
    JudgeSample,
    LfEvalScore,
    MockBackend,
    PromptLibrary,
    lf_eval,
    normalize_answer,
    provision_score,
    token_f1,
)
from lexhop.prompts import build_judge_request


def main() -> None:
    predicted = {"형법|제225조|", "형법|제229조|"}
    gold = {"형법|제225조|", "형법|제230조|"}
    score = provision_score(predicted, gold)
    print("provision overlap:")
    print(f"  precision {score.precision:.2f}  recall {score.recall:.2f}  "
          f"f1 {score.f1:.2f}  em {score.em}")

    print("\nanswer normalization:")
    print(" ", repr(normalize_answer("The  Court, therefore, AFFIRMS.")))
    print("\ntoken f1 (sets of normalized tokens):")
    print(f"  {token_f1('징역 10년 이하 에 처한다', '10년 이하 의 징역 에 처한다').f1:.4f}")

    # judge arithmetic: grades weighted by the probability of the grade tokens
    certain = LfEvalScore.from_samples([JudgeSample(s=10, p=1.0, raw_text="10")] * 10)
    hedged = LfEvalScore.from_samples([JudgeSample(s=3, p=0.8448, raw_text="3")] * 10)
    print("\njudge score arithmetic:")
    print(f"  ten certain 10s      -> {certain.value:.4f}")
    print(f"  ten hedged 3s        -> {hedged.value:.4f} (x10 scale: {hedged.value * 10:.2f})")

    # end to end: ten scripted judge calls with token logprobs
    lib = PromptLibrary.load("en")
    request = build_judge_request(
        lib,
        "Party A used a forged document. What penalty applies?",
        "CRIMINAL ACT Article 229: Use of falsified documents is punished as the forgery itself.",
        "Up to ten years imprisonment.",
        "Party A faces up to ten years imprisonment.",
    )
    judge = MockBackend()
    for i in range(10):
        grade = "9" if i % 2 == 0 else "8"
        judge.script(request, grade, token_probs=[(grade, 0.9)])
    result = lf_eval(
        ChatGateway(judge),
        lib,
        "Party A used a forged document. What penalty applies?",
        ["CRIMINAL ACT Article 229: Use of falsified documents is punished as the forgery itself."],
        "Up to ten years imprisonment.",
        "Party A faces up to ten years imprisonment.",
    )
    print(f"  scripted judge run   -> {result.value:.4f} from {len(result.samples)} samples")


if __name__ == "__main__":
    main()
