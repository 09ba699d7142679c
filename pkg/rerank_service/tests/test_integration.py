"""Primary-client integration against a live service instance.

Starts uvicorn on an ephemeral port in a background thread and drives it
through the primary package's remote scorer, including a full pipeline run
whose evidence containment must survive real reranking.
"""
from __future__ import annotations

import json
import threading
import time

import pytest
import uvicorn

lexhop = pytest.importorskip("lexhop")

from lexhop.corpus import ingest_corpus
from lexhop.dataset import load_dataset
from lexhop.gateway import ChatGateway, ChatResponse
from lexhop.pipeline import PipelineConfig, run_parser
from lexhop.rerank import RemoteScorer, rerank
from lexhop.sparse import build_index


@pytest.fixture(scope="module")
def live_server(app):
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def test_healthz_over_the_wire(live_server):
    scorer = RemoteScorer(live_server)
    assert scorer.healthy()


def test_permutation_prefix_on_twenty_passages(live_server):
    passages = [(f"p{i:02d}", f"law court rule passage {chr(ord('a') + i)}") for i in range(20)]
    scorer = RemoteScorer(live_server)
    l = 5
    top = rerank(scorer, "court fine query", passages, l)
    assert len(top) == l
    ids = [sp.provision_id for sp in top]
    assert len(set(ids)) == l
    assert set(ids) <= {pid for pid, _ in passages}
    scores = [sp.score for sp in top]
    assert scores == sorted(scores, reverse=True)


def test_remote_scorer_repeatable(live_server):
    scorer = RemoteScorer(live_server)
    texts = ["law rule", "court fine", "passage law"]
    assert scorer.score_pairs("court", texts) == scorer.score_pairs("court", texts)


class StageBackend:
    """Fixed replies per stage; lets the pipeline run under any rerank order."""

    id = "integration-mock"

    def __init__(self, drafts: list[str], answer: str = "integrated answer"):
        self.drafts = drafts
        self.answer = answer
        self.calls = 0

    def send(self, request):
        self.calls += 1
        user = request.messages[-1].content
        if "Candidates:" in user:
            text = "0"
        elif "Context:" in user:
            text = self.answer
        else:
            text = json.dumps(self.drafts, ensure_ascii=False)
        return ChatResponse(
            text=text,
            token_logprobs=None,
            prompt_tokens=1,
            completion_tokens=max(1, len(text.split())),
        )


CORPUS = [
    {"statute": "testlaw", "article": f"art{i}", "paragraph": None, "heading": None,
     "text": f"{word} duty and {word} limits under common rules", "lang": "en"}
    for i, word in enumerate(
        ["harbor", "vessel", "mining", "railway", "river", "forest", "meadow", "park"], start=1
    )
]

DATASET = [
    {
        "id": "int-1",
        "background": "Party A operates a harbor and a vessel business.",
        "question": "Which duties apply to the harbor and the vessel?",
        "answer": "The harbor duty and the vessel duty apply.",
        "gold_provisions": [
            {"statute": "testlaw", "article": "art1", "paragraph": None},
            {"statute": "testlaw", "article": "art2", "paragraph": None},
        ],
        "hops": 2,
        "lang": "en",
    }
]


def test_end_to_end_pipeline_with_live_reranker(live_server, app, tmp_path):
    corpus_path = tmp_path / "corpus.jsonl"
    corpus_path.write_text(
        "\n".join(json.dumps(r) for r in CORPUS) + "\n", encoding="utf-8"
    )
    dataset_path = tmp_path / "dataset.jsonl"
    dataset_path.write_text(
        "\n".join(json.dumps(r) for r in DATASET) + "\n", encoding="utf-8"
    )
    store = ingest_corpus(corpus_path, default_language="en")
    index = build_index(store)
    instance = load_dataset(dataset_path, store=store)[0]

    backend = StageBackend(
        drafts=[
            "harbor duty limits common rules",
            "vessel duty limits common rules",
        ]
    )
    scorer = RemoteScorer(live_server)
    config = PipelineConfig(k=6, l=3)
    calls_before = app.state.rerank_calls
    trace = run_parser(ChatGateway(backend), scorer, index, store, instance, config)
    assert app.state.rerank_calls > calls_before  # the live service really scored

    assert len(trace.evidences) == 2
    for evidence in trace.evidences:
        assert evidence.selected_id in evidence.topl_ids
        assert set(evidence.topl_ids) <= set(evidence.topk_ids)
        assert len(evidence.topl_ids) <= config.l
        assert len(evidence.topk_ids) <= config.k
    assert len(trace.final_provision_ids) <= len(trace.evidences)
    assert trace.answer == "integrated answer"
