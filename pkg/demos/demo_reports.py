"""Walkthrough: batch runs, persisted run directories, and report tables.

Runs the no-retrieval baseline over a three-instance dataset with a scripted
mock backend, persists the run directory, then renders the report shapes.

Run with: python demos/demo_reports.py
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from lexhop import ChatGateway, MockBackend, PassthroughScorer, PipelineConfig, PromptLibrary, ingest_corpus
from lexhop.dataset import load_dataset
from lexhop.harness import RunResources, load_run, render_report, run_batch
from lexhop.prompts import build_sp_request

PROVISIONS = [
    {"statute": "가상세법", "article": f"제{i}조", "paragraph": None, "heading": None,
     "text": f"{word} 신고 의무 에 관한 규정", "lang": "ko"}
    for i, word in enumerate(["소득", "부가", "양도"], start=1)
]

INSTANCES = [
    {
        "id": f"tax-{i}",
        "background": f"갑 은 {word} 관련 거래 를 하였다",
        "question": f"{word} 신고 의무 가 있는가",
        "answer": f"{word} 신고 의무 가 있다",
        "gold_provisions": [{"statute": "가상세법", "article": f"제{i}조", "paragraph": None}],
        "hops": 1,
        "lang": "ko",
    }
    for i, word in enumerate(["소득", "부가", "양도"], start=1)
]


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="lexhop-demo-"))
    corpus_path = workdir / "corpus.jsonl"
    corpus_path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in PROVISIONS) + "\n", encoding="utf-8"
    )
    dataset_path = workdir / "dataset.jsonl"
    dataset_path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in INSTANCES) + "\n", encoding="utf-8"
    )

    store = ingest_corpus(corpus_path)
    instances = load_dataset(dataset_path, store=store)
    lib = PromptLibrary.load("ko")

    mock = MockBackend()
    for record, instance in zip(INSTANCES, instances):
        mock.script(
            build_sp_request(lib, instance.background, instance.question),
            record["answer"],
            key_hint=instance.id,
        )

    out_dir = workdir / "run-sp"
    resources = RunResources(store=store, gateway=ChatGateway(mock), scorer=PassthroughScorer(), lib=lib)
    manifest, records = run_batch("sp", PipelineConfig(), instances, resources, out_dir=out_dir)

    print(f"run directory: {out_dir}")
    print(sorted(p.name for p in out_dir.iterdir()))

    reloaded_manifest, reloaded_records = load_run(out_dir)
    print("\nmain table (no-retrieval rows show '-' for provision metrics):")
    print(render_report([(reloaded_manifest, reloaded_records)], "main_table"))

    print("\nper-hop breakdown:")
    print(render_report([(reloaded_manifest, reloaded_records)], "hop_breakdown", instances=instances))

    print("\ntoken efficiency:")
    print(render_report([(reloaded_manifest, reloaded_records)], "efficiency"))


if __name__ == "__main__":
    main()
