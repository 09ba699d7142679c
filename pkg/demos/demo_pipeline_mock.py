"""Walkthrough: the full retrieve-rerank-select pipeline on a mock backend.

The mock backend maps request digests to scripted replies, so the demo builds
the exact requests the pipeline will issue (via the public prompt builders)
and scripts a reply for each: one generation call, one selection call per
generated draft, one final answer call.

Run with: python demos/demo_pipeline_mock.py
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from lexhop import (
    ChatGateway,
    MockBackend,
    PassthroughScorer,
    PipelineConfig,
    PromptLibrary,
    build_index,
    ingest_corpus,
    run_parser,
)
from lexhop.dataset import load_dataset
from lexhop.prompts import build_answer_request, build_generation_request, build_selection_request

PROVISIONS = [
    {"statute": "가상어업법", "article": f"제{i}조", "paragraph": None, "heading": None,
     "text": f"{word} 면허 의 요건 과 {word} 관리 에 관한 사항 을 정한다", "lang": "ko"}
    for i, word in enumerate(["양식", "어선", "항로", "수산", "갯벌", "등표"], start=1)
]

INSTANCE = {
    "id": "demo-1",
    "background": "갑 은 양식 사업 과 어선 운항 을 함께 계획 하고 있다",
    "question": "양식 과 어선 에 필요한 면허 요건 은 무엇 인가",
    "answer": "양식 면허 와 어선 면허 요건 을 모두 갖추어야 한다",
    "gold_provisions": [
        {"statute": "가상어업법", "article": "제1조", "paragraph": None},
        {"statute": "가상어업법", "article": "제2조", "paragraph": None},
    ],
    "hops": 2,
    "lang": "ko",
}


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="lexhop-demo-"))
    corpus_path = workdir / "corpus.jsonl"
    corpus_path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in PROVISIONS) + "\n", encoding="utf-8"
    )
    dataset_path = workdir / "dataset.jsonl"
    dataset_path.write_text(json.dumps(INSTANCE, ensure_ascii=False) + "\n", encoding="utf-8")

    store = ingest_corpus(corpus_path)
    index = build_index(store)
    instance = load_dataset(dataset_path, store=store)[0]
    lib = PromptLibrary.load("ko")
    config = PipelineConfig(k=4, l=2)

    # script the mock: the model "drafts" the two gold provision texts
    mock = MockBackend()
    gold_texts = [store.lookup(pid).text for pid in instance.gold_provision_ids]
    mock.script(
        build_generation_request(lib, instance.background, instance.question),
        json.dumps(gold_texts, ensure_ascii=False),
        key_hint="generation",
    )
    for gold_id, text in zip(instance.gold_provision_ids, gold_texts):
        top_l = [c.provision_id for c in index.query(text, config.k)][: config.l]
        candidates = [store.lookup(pid).text for pid in top_l]
        mock.script(
            build_selection_request(lib, instance.background, instance.question, candidates),
            str(top_l.index(gold_id)),
            key_hint=f"selection for {gold_id}",
        )
    mock.script(
        build_answer_request(
            lib, instance.background, instance.question,
            [store.lookup(pid) for pid in instance.gold_provision_ids],
        ),
        INSTANCE["answer"],
        key_hint="final answer",
    )

    trace = run_parser(ChatGateway(mock), PassthroughScorer(), index, store, instance, config, lib)

    print("parametric drafts:")
    for draft in trace.parametric_provisions:
        print(f"  {draft.ordinal}. {draft.text}")
    print("\nper-hop evidence (top-k -> top-l -> selected):")
    for evidence in trace.evidences:
        print(f"  {len(evidence.topk_ids)} retrieved -> {list(evidence.topl_ids)} -> {evidence.selected_id}")
    print("\nfinal provisions:", trace.final_provision_ids)
    print("answer:", trace.answer)
    print("gold:", list(instance.gold_provision_ids))
    print("llm calls (stage):", [u["stage"] for u in trace.usage])


if __name__ == "__main__":
    main()
