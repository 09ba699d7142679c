"""Benchmark instances: scenario, question, gold answer, gold provisions.

Instance files are JSONL:

    {"id": str, "background": str, "question": str, "answer": str,
     "gold_provisions": [{"statute": str, "article": str, "paragraph": str|null}],
     "hops": int, "lang": str}

Each instance's hop count equals its number of gold provisions; the loader
enforces that, and optionally resolves every gold reference against a
provision store so unresolvable gold ids fail loudly at load time instead of
silently zeroing retrieval scores later.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import ProvisionStore, canonical_id
from .errors import DatasetError, InvalidFieldError

HOP_LEVELS = (1, 2, 3)


@dataclass(frozen=True)
class QAInstance:
    id: str
    background: str
    question: str
    gold_answer: str
    gold_provision_ids: tuple[str, ...]
    hops: int
    language: str

    def __post_init__(self):
        if not self.id:
            raise DatasetError("instance id must be non-empty")
        for field_name in ("background", "question", "gold_answer"):
            if not getattr(self, field_name).strip():
                raise DatasetError(f"instance {self.id}: {field_name} must be non-empty")
        object.__setattr__(self, "gold_provision_ids", tuple(self.gold_provision_ids))
        if self.hops not in HOP_LEVELS:
            raise DatasetError(f"instance {self.id}: hops must be one of {HOP_LEVELS}, got {self.hops}")
        unique = set(self.gold_provision_ids)
        if len(unique) != len(self.gold_provision_ids):
            raise DatasetError(f"instance {self.id}: duplicate gold provision ids")
        if self.hops != len(unique):
            raise DatasetError(
                f"instance {self.id}: hops={self.hops} but {len(unique)} gold provisions"
            )

    @property
    def gold_set(self) -> frozenset[str]:
        return frozenset(self.gold_provision_ids)


def load_dataset(path: str | Path, store: ProvisionStore | None = None) -> list[QAInstance]:
    """Load and validate a benchmark file; optionally resolve gold ids.

    When ``store`` is given, every gold provision must exist in it; the error
    lists all offenders at once rather than failing one at a time.
    """
    path = Path(path)
    instances: list[QAInstance] = []
    seen_ids: set[str] = set()
    unresolved: list[tuple[str, str]] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            instance_id = str(record.get("id", f"<line {line_no}>"))
            try:
                gold_ids = tuple(
                    canonical_id(ref["statute"], ref["article"], ref.get("paragraph"))
                    for ref in record["gold_provisions"]
                )
                instance = QAInstance(
                    id=str(record["id"]),
                    background=record["background"],
                    question=record["question"],
                    gold_answer=record["answer"],
                    gold_provision_ids=gold_ids,
                    hops=int(record["hops"]),
                    language=record.get("lang", "ko"),
                )
            except (KeyError, TypeError, InvalidFieldError) as exc:
                raise DatasetError(f"instance {instance_id}: {exc!r}") from exc
            if instance.id in seen_ids:
                raise DatasetError(f"duplicate instance id {instance.id!r}")
            seen_ids.add(instance.id)
            if store is not None:
                for gid in instance.gold_provision_ids:
                    if gid not in store:
                        unresolved.append((instance.id, gid))
            instances.append(instance)
    if unresolved:
        listing = "; ".join(f"{iid}: {gid}" for iid, gid in unresolved)
        raise DatasetError(f"{len(unresolved)} gold provision id(s) not in corpus: {listing}")
    return instances


def hop_counts(instances: list[QAInstance]) -> dict[int, int]:
    counts = {level: 0 for level in HOP_LEVELS}
    for instance in instances:
        counts[instance.hops] += 1
    return counts
