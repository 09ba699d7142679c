"""Command-line front end.

    lexhop run    --method {parser|sp|cot|or-sp|or-cot} --dataset F --corpus F
                  [--k N] [--l N] [--ablate rerank|selection|provision ...]
                  --backend URL|mock:FIXTURE [--judge URL|none]
                  [--reranker URL|passthrough] [--cache-dir DIR] --out DIR
                  [--lang {ko,en}]
    lexhop index build --corpus F --out F
    lexhop report --run DIR [--run DIR ...] --shape NAME [--dataset F]
    lexhop score  --pred F --gold F

API keys come from the environment only (default variable OPENAI_API_KEY).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import ingest_corpus, write_manifest_sidecar
from .dataset import hop_counts, load_dataset
from .errors import LexhopError
from .gateway import ChatGateway, MockBackend, OpenAICompatBackend, ResponseCache
from .harness import (
    REPORT_SHAPES,
    RunResources,
    load_run,
    render_report,
    run_batch,
    score_predictions,
)
from .pipeline import PipelineConfig
from .prompts import PromptLibrary
from .rerank import PassthroughScorer, RemoteScorer
from .sparse import Bm25Index, build_index

_METHOD_ALIASES = {"or-sp": "or_sp", "or-cot": "or_cot"}


def _make_backend(spec: str, model: str | None, api_key_env: str):
    if spec.startswith("mock:"):
        return MockBackend.from_fixture(spec.removeprefix("mock:"))
    if model is None:
        raise LexhopError(f"--model is required for HTTP backend {spec!r}")
    return OpenAICompatBackend(base_url=spec, model=model, api_key_env=api_key_env)


def _cmd_run(args: argparse.Namespace) -> int:
    method = _METHOD_ALIASES.get(args.method, args.method)
    store = ingest_corpus(args.corpus)
    dataset = load_dataset(args.dataset, store=store)
    index = None
    if method in ("parser", "or_sp", "or_cot"):
        index = Bm25Index.load(args.index) if args.index else build_index(store)
    cache = ResponseCache(args.cache_dir) if args.cache_dir else None
    backend = _make_backend(args.backend, args.model, args.api_key_env)
    gateway = ChatGateway(backend, cache=cache)
    judge = None
    if args.judge and args.judge != "none":
        judge_backend = _make_backend(args.judge, args.judge_model or args.model, args.api_key_env)
        judge = ChatGateway(judge_backend, cache=cache)
    if args.reranker == "passthrough":
        scorer = PassthroughScorer()
    else:
        scorer = RemoteScorer(args.reranker)
    ablations = set(args.ablate or [])
    config = PipelineConfig(
        k=args.k,
        l=args.l,
        ablate_rerank="rerank" in ablations,
        ablate_selection="selection" in ablations,
        ablate_provision="provision" in ablations,
        max_parametric=args.max_parametric,
        model_tag=args.model_tag,
    )
    lib = PromptLibrary.load(args.lang)
    resources = RunResources(
        store=store, gateway=gateway, scorer=scorer, index=index, lib=lib, judge=judge
    )
    manifest, records = run_batch(
        method,
        config,
        dataset,
        resources,
        out_dir=args.out,
        workers=args.workers,
        lang=args.lang,
        judge_samples=args.judge_samples,
    )
    print(f"run complete: {manifest['n_instances']} instances, {manifest['n_failures']} failures")
    print(render_report([(manifest, records)], "main_table"))
    print(f"results written to {args.out}")
    return 0


def _cmd_index_build(args: argparse.Namespace) -> int:
    store = ingest_corpus(args.corpus)
    sidecar = write_manifest_sidecar(store)
    index = build_index(store)
    index.save(args.out)
    print(
        f"indexed {store.manifest.provision_count} provisions from "
        f"{store.manifest.statute_count} statutes -> {args.out}"
    )
    print(f"manifest sidecar: {sidecar}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    runs = [load_run(run_dir) for run_dir in args.run]
    instances = load_dataset(args.dataset) if args.dataset else None
    out_dir = args.out or args.run[0]
    text = render_report(runs, args.shape, out_dir=out_dir, instances=instances)
    print(text)
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.gold)
    predictions = [
        json.loads(line)
        for line in Path(args.pred).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    records = score_predictions(predictions, dataset)
    manifest = {"method": "offline", "backend_id": "-", "config": {}}
    print(render_report([(manifest, records)], "main_table"))
    print()
    print(render_report([(manifest, records)], "hop_breakdown", instances=dataset))
    counts = hop_counts(dataset)
    print(f"\ndataset hop counts: {counts}")
    return 0


def build_argparser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexhop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a method over a dataset")
    run.add_argument("--method", required=True, choices=["parser", "sp", "cot", "or-sp", "or-cot"])
    run.add_argument("--dataset", required=True)
    run.add_argument("--corpus", required=True)
    run.add_argument("--k", type=int, default=100)
    run.add_argument("--l", type=int, default=10)
    run.add_argument("--ablate", action="append", choices=["rerank", "selection", "provision"])
    run.add_argument("--backend", required=True, help="chat endpoint URL or mock:<fixture.jsonl>")
    run.add_argument("--judge", default="none", help="judge endpoint URL, mock:<fixture>, or 'none'")
    run.add_argument("--reranker", default="passthrough", help="rerank service URL or 'passthrough'")
    run.add_argument("--cache-dir", default=None)
    run.add_argument("--out", required=True)
    run.add_argument("--lang", default="ko", choices=["ko", "en"])
    run.add_argument("--model", default=None, help="model name for HTTP backends")
    run.add_argument("--judge-model", default=None)
    run.add_argument("--model-tag", default="default")
    run.add_argument("--max-parametric", type=int, default=5)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--judge-samples", type=int, default=10)
    run.add_argument("--index", default=None, help="optional pre-built index file")
    run.add_argument("--api-key-env", default="OPENAI_API_KEY")
    run.set_defaults(func=_cmd_run)

    index = sub.add_parser("index", help="index management")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    index_build = index_sub.add_parser("build", help="build and save a BM25 index")
    index_build.add_argument("--corpus", required=True)
    index_build.add_argument("--out", required=True)
    index_build.set_defaults(func=_cmd_index_build)

    report = sub.add_parser("report", help="render report tables over run directories")
    report.add_argument("--run", action="append", required=True)
    report.add_argument("--shape", required=True, choices=list(REPORT_SHAPES))
    report.add_argument("--dataset", default=None, help="dataset file (needed for hop_breakdown)")
    report.add_argument("--out", default=None)
    report.set_defaults(func=_cmd_report)

    score = sub.add_parser("score", help="offline metric recompute")
    score.add_argument("--pred", required=True)
    score.add_argument("--gold", required=True)
    score.set_defaults(func=_cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_argparser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LexhopError, FileNotFoundError, FileExistsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
