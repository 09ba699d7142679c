"""Walkthrough: ingest a statute corpus, build the BM25 index, query it.

Run with: python demos/demo_corpus_indexing.py
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from lexhop import Bm25Index, build_index, canonical_id, ingest_corpus
from lexhop.corpus import write_manifest_sidecar

PROVISIONS = [
    {"statute": "가상도로법", "article": "제10조", "paragraph": "1항", "heading": "통행 우선순위",
     "text": "긴급 자동차 는 다른 차량 에 우선 하여 통행 할 수 있다", "lang": "ko"},
    {"statute": "가상도로법", "article": "제10조", "paragraph": "2항", "heading": "통행 방법",
     "text": "긴급 자동차 가 아닌 차량 은 교차로 에서 긴급 자동차 에 진로 를 양보 하여야 한다", "lang": "ko"},
    {"statute": "가상하천법", "article": "제3조", "paragraph": None, "heading": "점용 허가",
     "text": "하천 을 점용 하려는 자 는 관리청 의 허가 를 받아야 한다", "lang": "ko"},
    {"statute": "가상하천법", "article": "제4조", "paragraph": None, "heading": "점용료",
     "text": "관리청 은 점용 허가 를 받은 자 로부터 점용료 를 징수 할 수 있다", "lang": "ko"},
    {"statute": "가상공원법", "article": "제1조", "paragraph": None, "heading": "목적",
     "text": "이 법 은 공원 의 지정 과 보전 에 필요한 사항 을 정함 을 목적 으로 한다", "lang": "ko"},
]


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="lexhop-demo-"))
    corpus_path = workdir / "corpus.jsonl"
    corpus_path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in PROVISIONS) + "\n", encoding="utf-8"
    )

    # every provision gets a canonical "statute|article|paragraph" id
    print("canonical id for (가상하천법, 제3조):", canonical_id("가상하천법", "제3조"))

    store = ingest_corpus(corpus_path)
    sidecar = write_manifest_sidecar(store)
    print(f"ingested {store.manifest.provision_count} provisions "
          f"from {store.manifest.statute_count} statutes")
    print("manifest sidecar:", sidecar.name)
    print("content digest:", store.manifest.content_digest[:16], "...")

    index = build_index(store)
    print("\nquery: '긴급 자동차 통행'")
    for candidate in index.query("긴급 자동차 통행", k=3):
        provision = store.lookup(candidate.provision_id)
        print(f"  rank {candidate.rank}  score {candidate.score:8.4f}  {provision.citation()}")

    # the index serializes to a JSON blob and reloads bit-exactly
    index_path = workdir / "index.json"
    index.save(index_path)
    reloaded = Bm25Index.load(index_path)
    assert reloaded.query("긴급 자동차 통행", 3) == index.query("긴급 자동차 통행", 3)
    print("\nserialized index reloads with identical rankings:", index_path.name)


if __name__ == "__main__":
    main()
