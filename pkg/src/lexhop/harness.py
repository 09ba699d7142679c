"""Batch orchestration: run a method over a dataset, persist, report.

A run produces one directory containing ``manifest.json`` (full config
snapshot and usage accounting), ``records.jsonl`` (exactly one record per
instance, failures included), and ``traces/`` (per-instance pipeline traces
for the parser method). The directory is materialized with a temp-dir +
rename, so an interrupted run leaves nothing behind; replaying the same run
against the same response cache reproduces the outputs byte for byte.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .baselines import run_cot, run_one_time_retrieval, run_sp
from .corpus import ProvisionStore
from .dataset import QAInstance, hop_counts
from .errors import JoinError, RunFailure
from .gateway import DEFAULT_TEMPERATURE, DEFAULT_TOP_P, ChatGateway, UsageLedger
from .metrics import (
    LfEvalScore,
    ProvisionScore,
    TokenScore,
    hop_breakdown,
    lf_eval,
    provision_score,
    token_f1,
)
from .pipeline import PipelineConfig, PipelineTrace, run_parser
from .prompts import PromptLibrary, join_background_question
from .rerank import Scorer
from .sparse import Bm25Index

METHODS = ("parser", "sp", "cot", "or_sp", "or_cot")
RETRIEVAL_METHODS = ("parser", "or_sp", "or_cot")

REPORT_SHAPES = ("main_table", "hop_breakdown", "ablation", "sweep", "efficiency")


@dataclass
class ResultRecord:
    instance_id: str
    answer: str
    predicted_provision_ids: list[str]
    provision: ProvisionScore | None
    token: TokenScore | None
    lf: LfEvalScore | None = None
    usage: list[dict] = field(default_factory=list)
    failure: bool = False
    failure_reason: str | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "answer": self.answer,
            "predicted_provision_ids": list(self.predicted_provision_ids),
            "provision": self.provision.to_dict() if self.provision else None,
            "token": self.token.to_dict() if self.token else None,
            "lf_eval": self.lf.to_dict() if self.lf else None,
            "usage": self.usage,
            "failure": self.failure,
            "failure_reason": self.failure_reason,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRecord":
        provision = data.get("provision")
        token = data.get("token")
        lf = data.get("lf_eval")
        return cls(
            instance_id=data["instance_id"],
            answer=data["answer"],
            predicted_provision_ids=list(data["predicted_provision_ids"]),
            provision=ProvisionScore(**provision) if provision else None,
            token=TokenScore(**token) if token else None,
            lf=None
            if lf is None
            else LfEvalScore(
                value=lf["value"],
                samples=tuple(),
            ),
            usage=data.get("usage", []),
            failure=data.get("failure", False),
            failure_reason=data.get("failure_reason"),
            extras=data.get("extras", {}),
        )


@dataclass
class RunResources:
    store: ProvisionStore
    gateway: ChatGateway
    scorer: Scorer
    index: Bm25Index | None = None
    lib: PromptLibrary | None = None
    judge: ChatGateway | None = None


def dataset_digest(instances: Sequence[QAInstance]) -> str:
    blob = json.dumps(
        [
            {
                "id": i.id,
                "background": i.background,
                "question": i.question,
                "answer": i.gold_answer,
                "gold": sorted(i.gold_set),
                "hops": i.hops,
                "lang": i.language,
            }
            for i in instances
        ],
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def artifact_version() -> str:
    version = __version__
    try:
        commit = (
            subprocess.run(
                ["git", "rev-parse", "--short", "HEAD"],
                capture_output=True,
                text=True,
                timeout=5,
                cwd=Path(__file__).parent,
            ).stdout.strip()
        )
        if commit:
            version = f"{version}+{commit}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


def _run_instance(
    method: str,
    instance: QAInstance,
    resources: RunResources,
    config: PipelineConfig,
) -> tuple[ResultRecord, PipelineTrace | None]:
    lib = resources.lib or PromptLibrary.load(instance.language)
    ledger = UsageLedger()
    trace: PipelineTrace | None = None
    predicted: list[str] = []
    extras: dict = {}
    if method == "parser":
        trace = run_parser(
            resources.gateway,
            resources.scorer,
            resources.index,
            resources.store,
            instance,
            config,
            lib,
        )
        answer = trace.answer
        predicted = list(trace.final_provision_ids)
        usage = trace.usage
        extras = {
            "generation_fallback": trace.generation_fallback,
            "scorer_fallback": trace.scorer_fallback,
            "selection_fallbacks": sum(1 for e in trace.evidences if e.fallback_used),
        }
    elif method == "sp":
        answer = run_sp(resources.gateway, lib, instance, ledger, config.model_tag)
        usage = ledger.to_dicts()
    elif method == "cot":
        cot = run_cot(resources.gateway, lib, instance, ledger, config.model_tag)
        answer = cot.answer
        usage = ledger.to_dicts()
        extras = {"reasoning": cot.reasoning, "parse_warning": cot.parse_warning}
    elif method in ("or_sp", "or_cot"):
        result = run_one_time_retrieval(
            resources.gateway,
            lib,
            resources.index,
            resources.store,
            instance,
            mode=method.removeprefix("or_"),
            ledger=ledger,
            model_tag=config.model_tag,
        )
        answer = result.answer
        predicted = list(result.retrieved_ids)
        usage = ledger.to_dicts()
        extras = {"retrieval_shortfall": instance.hops - len(result.retrieved_ids)}
        if method == "or_cot":
            extras.update({"reasoning": result.reasoning, "parse_warning": result.parse_warning})
    else:
        raise ValueError(f"unknown method {method!r}")

    provision = (
        provision_score(predicted, instance.gold_set) if method in RETRIEVAL_METHODS else None
    )
    token = token_f1(answer, instance.gold_answer, instance.language)
    record = ResultRecord(
        instance_id=instance.id,
        answer=answer,
        predicted_provision_ids=predicted,
        provision=provision,
        token=token,
        usage=usage,
        extras=extras,
    )
    return record, trace


def run_batch(
    method: str,
    config: PipelineConfig,
    dataset: Sequence[QAInstance],
    resources: RunResources,
    out_dir: str | Path | None = None,
    workers: int = 1,
    lang: str = "ko",
    judge_samples: int = 10,
) -> tuple[dict, list[ResultRecord]]:
    """Execute one method over the whole dataset.

    Per-instance exceptions become failure records and the batch continues;
    hard interrupts propagate so an interrupted run persists nothing. If a
    judge gateway is present in the resources, the judge post-pass runs over
    the finished answers before anything is written.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method in RETRIEVAL_METHODS and resources.index is None:
        raise ValueError(f"method {method!r} needs a built index")
    started_at = _dt.datetime.now(_dt.timezone.utc).isoformat()
    records_by_id: dict[str, ResultRecord] = {}
    traces_by_id: dict[str, PipelineTrace] = {}
    lock = threading.Lock()

    def work(instance: QAInstance) -> None:
        try:
            record, trace = _run_instance(method, instance, resources, config)
        except Exception as exc:
            record, trace = (
                ResultRecord(
                    instance_id=instance.id,
                    answer="",
                    predicted_provision_ids=[],
                    provision=None,
                    token=None,
                    failure=True,
                    failure_reason=f"{type(exc).__name__}: {exc}",
                ),
                None,
            )
        with lock:
            records_by_id[instance.id] = record
            if trace is not None:
                traces_by_id[instance.id] = trace

    if workers <= 1:
        for instance in dataset:
            work(instance)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(work, instance) for instance in dataset]
            try:
                for future in futures:
                    future.result()
            except BaseException:
                for future in futures:
                    future.cancel()
                raise

    records = [records_by_id[i.id] for i in dataset]
    if all(r.failure for r in records):
        raise RunFailure(f"all {len(records)} instances failed")

    if resources.judge is not None:
        lib = resources.lib or PromptLibrary.load(lang)
        records = apply_judge(
            records, dataset, resources.store, resources.judge, lib, judge_samples
        )

    batch_ledger = UsageLedger()
    for record in records:
        for usage in record.usage:
            batch_ledger.record(usage["stage"], usage["prompt_tokens"], usage["completion_tokens"])

    lib = resources.lib or PromptLibrary.load(lang)
    manifest = {
        "method": method,
        "config": config.to_dict(),
        "sampling_params": {"temperature": DEFAULT_TEMPERATURE, "top_p": DEFAULT_TOP_P},
        "lang": lang,
        "backend_id": resources.gateway.backend.id,
        "scorer": type(resources.scorer).__name__,
        "judge_backend_id": resources.judge.backend.id if resources.judge else None,
        "judge_samples": judge_samples if resources.judge else None,
        "corpus_digest": resources.store.manifest.content_digest,
        "dataset_digest": dataset_digest(dataset),
        "prompt_digests": lib.digests,
        "artifact_version": artifact_version(),
        "started_at": started_at,
        "finished_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "n_instances": len(records),
        "n_failures": sum(1 for r in records if r.failure),
        "hop_counts": {str(k): v for k, v in hop_counts(list(dataset)).items()},
        "usage": batch_ledger.report(),
        "workers": workers,
    }
    if out_dir is not None:
        persist_run(out_dir, manifest, records, traces_by_id)
    return manifest, records


def apply_judge(
    records: Sequence[ResultRecord],
    dataset: Sequence[QAInstance],
    store: ProvisionStore,
    judge: ChatGateway,
    lib: PromptLibrary,
    n_samples: int = 10,
) -> list[ResultRecord]:
    """Separable judge post-pass: fill the judge score on non-failed records.

    The judge sees background+question, the gold provisions as context, the
    gold answer as expected output, and the recorded answer as prediction.
    """
    by_id = {i.id: i for i in dataset}
    out: list[ResultRecord] = []
    for record in records:
        if record.failure:
            out.append(record)
            continue
        instance = by_id[record.instance_id]
        ledger = UsageLedger()
        score = lf_eval(
            judge,
            lib,
            join_background_question(instance.background, instance.question),
            [store.lookup(pid) for pid in instance.gold_provision_ids],
            instance.gold_answer,
            record.answer,
            n_samples=n_samples,
            ledger=ledger,
        )
        record.lf = score
        record.usage = list(record.usage) + ledger.to_dicts()
        out.append(record)
    return out


def persist_run(
    out_dir: str | Path,
    manifest: dict,
    records: Sequence[ResultRecord],
    traces: dict[str, PipelineTrace] | None = None,
) -> Path:
    """Write the run directory atomically (build in a temp dir, then rename)."""
    out_dir = Path(out_dir)
    if out_dir.exists():
        raise FileExistsError(f"run directory {out_dir} already exists")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_dir.parent / f".{out_dir.name}.tmp{os.getpid()}"
    if tmp.exists():
        raise FileExistsError(f"stale temp run directory {tmp}")
    tmp.mkdir()
    (tmp / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8"
    )
    with (tmp / "records.jsonl").open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    if traces:
        trace_dir = tmp / "traces"
        trace_dir.mkdir()
        for instance_id, trace in sorted(traces.items()):
            (trace_dir / f"{instance_id}.json").write_text(trace.to_json(), encoding="utf-8")
    os.replace(tmp, out_dir)
    return out_dir


def load_run(run_dir: str | Path) -> tuple[dict, list[ResultRecord]]:
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    records = [
        ResultRecord.from_dict(json.loads(line))
        for line in (run_dir / "records.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    return manifest, records


def aggregate_records(records: Sequence[ResultRecord]) -> dict:
    """Mean metrics over the records where each metric is present."""

    def mean(values: list[float]) -> float | None:
        return sum(values) / len(values) if values else None

    return {
        "n": len(records),
        "n_failures": sum(1 for r in records if r.failure),
        "provision_f1": mean([r.provision.f1 for r in records if r.provision]),
        "provision_em": mean([float(r.provision.em) for r in records if r.provision]),
        "token_f1": mean([r.token.f1 for r in records if r.token]),
        "lf_eval": mean([r.lf.value for r in records if r.lf]),
    }


def _record_scores(record: ResultRecord) -> dict[str, float | None]:
    return {
        "provision_f1": record.provision.f1 if record.provision else None,
        "provision_em": float(record.provision.em) if record.provision else None,
        "token_f1": record.token.f1 if record.token else None,
        "lf_eval": record.lf.value if record.lf else None,
    }


def _fmt(value: float | None, scale: float = 100.0) -> str:
    return "-" if value is None else f"{value * scale:.2f}"


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    lines += ["  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in rows]
    return "\n".join(lines)


def _ablation_label(config: dict) -> str:
    off = [
        name
        for name, flag in (
            ("reranking", config.get("ablate_rerank")),
            ("selection", config.get("ablate_selection")),
            ("provision", config.get("ablate_provision")),
        )
        if flag
    ]
    return "full" if not off else "w/o " + ", ".join(off)


def render_report(
    runs: Sequence[tuple[dict, Sequence[ResultRecord]]],
    shape: str,
    out_dir: str | Path | None = None,
    instances: Sequence[QAInstance] | None = None,
) -> str:
    """Render one report shape over one or more runs as an aligned table.

    F-1/EM/token columns are percentages; the judge column is reported on
    both the 0-100 presentation scale (value x 10) and the raw 0-10 scale.
    When ``out_dir`` is set the same table is also written as CSV.
    """
    if shape not in REPORT_SHAPES:
        raise ValueError(f"unknown report shape {shape!r}; expected one of {REPORT_SHAPES}")
    if not runs or any(not records for _, records in runs):
        raise ValueError("render_report needs at least one run with records")

    if shape == "main_table":
        headers = ["method", "model", "F-1", "EM", "Token F-1", "LF-Eval", "LF-Eval (raw)", "n", "failures"]
        rows = []
        for manifest, records in runs:
            agg = aggregate_records(records)
            rows.append(
                [
                    manifest.get("method", "?"),
                    manifest.get("backend_id", "?"),
                    _fmt(agg["provision_f1"]),
                    _fmt(agg["provision_em"]),
                    _fmt(agg["token_f1"]),
                    _fmt(agg["lf_eval"], scale=10.0),
                    "-" if agg["lf_eval"] is None else f"{agg['lf_eval']:.4f}",
                    str(agg["n"]),
                    str(agg["n_failures"]),
                ]
            )
    elif shape == "hop_breakdown":
        if instances is None:
            raise ValueError("hop_breakdown needs the dataset instances for the join")
        manifest, records = runs[0]
        scores = {r.instance_id: _record_scores(r) for r in records}
        breakdown = hop_breakdown(scores, list(instances))
        headers = ["hops", "n", "F-1", "EM", "Token F-1", "LF-Eval"]
        rows = []
        for group in ("1", "2", "3", "overall"):
            entry = breakdown[group]
            means = entry["means"]
            rows.append(
                [
                    group,
                    str(entry["n"]),
                    _fmt(means.get("provision_f1")),
                    _fmt(means.get("provision_em")),
                    _fmt(means.get("token_f1")),
                    _fmt(means.get("lf_eval"), scale=10.0),
                ]
            )
    elif shape == "ablation":
        headers = ["variant", "F-1", "EM", "Token F-1", "LF-Eval"]
        rows = []
        for manifest, records in runs:
            agg = aggregate_records(records)
            rows.append(
                [
                    _ablation_label(manifest.get("config", {})),
                    _fmt(agg["provision_f1"]),
                    _fmt(agg["provision_em"]),
                    _fmt(agg["token_f1"]),
                    _fmt(agg["lf_eval"], scale=10.0),
                ]
            )
    elif shape == "sweep":
        headers = ["k", "l", "F-1", "EM", "Token F-1", "LF-Eval"]
        rows = []
        for manifest, records in runs:
            config = manifest.get("config", {})
            agg = aggregate_records(records)
            rows.append(
                [
                    str(config.get("k", "?")),
                    str(config.get("l", "?")),
                    _fmt(agg["provision_f1"]),
                    _fmt(agg["provision_em"]),
                    _fmt(agg["token_f1"]),
                    _fmt(agg["lf_eval"], scale=10.0),
                ]
            )
    else:  # efficiency
        headers = ["method", "tokens/instance", "generate", "select", "answer", "judge", "Token F-1", "LF-Eval"]
        rows = []
        for manifest, records in runs:
            n = max(1, len(records))
            per_stage: dict[str, int] = {}
            total = 0
            for record in records:
                for usage in record.usage:
                    per_stage[usage["stage"]] = per_stage.get(usage["stage"], 0) + usage["completion_tokens"]
                    total += usage["completion_tokens"]
            agg = aggregate_records(records)
            rows.append(
                [
                    manifest.get("method", "?"),
                    f"{total / n:.1f}",
                    *(f"{per_stage.get(stage, 0) / n:.1f}" for stage in ("generate", "select", "answer", "judge")),
                    _fmt(agg["token_f1"]),
                    _fmt(agg["lf_eval"], scale=10.0),
                ]
            )

    text = _table(headers, rows)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_lines = [",".join(headers)] + [",".join(f'"{c}"' for c in row) for row in rows]
        (out_dir / f"report_{shape}.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
        (out_dir / f"report_{shape}.txt").write_text(text + "\n", encoding="utf-8")
    return text


def score_predictions(
    predictions: Sequence[dict],
    dataset: Sequence[QAInstance],
) -> list[ResultRecord]:
    """Offline metric recompute over prediction dicts.

    Each prediction is ``{"id": str, "answer": str,
    "predicted_provision_ids": [str], ...}``; provision metrics are computed
    only when the prediction carries ids.
    """
    by_id = {i.id: i for i in dataset}
    records = []
    for pred in predictions:
        instance = by_id.get(str(pred.get("id")))
        if instance is None:
            raise JoinError(f"prediction {pred.get('id')!r} does not join to any dataset instance")
        predicted = list(pred.get("predicted_provision_ids") or [])
        answer = pred.get("answer", "")
        records.append(
            ResultRecord(
                instance_id=instance.id,
                answer=answer,
                predicted_provision_ids=predicted,
                provision=provision_score(predicted, instance.gold_set)
                if "predicted_provision_ids" in pred
                else None,
                token=token_f1(answer, instance.gold_answer, instance.language),
            )
        )
    return records
