"""Paragraph-level statute corpus: ingestion, canonical ids, and lookup.

The corpus is a JSON Lines file, one provision per line:

    {"statute": str, "article": str, "paragraph": str|null,
     "heading": str|null, "text": str, "lang": "ko"|"en"}

Every provision gets a canonical id ``statute|article|paragraph`` built from
NFKC-normalized, whitespace-collapsed fields, so gold-set comparisons have a
stable key. Duplicate ids are a hard ingestion error: silently overwriting a
provision would corrupt retrieval scoring downstream.
"""
from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    CorpusParseError,
    DuplicateProvisionError,
    InvalidFieldError,
    ProvisionNotFoundError,
)

_WS_RE = re.compile(r"\s+")

LANGUAGES = ("ko", "en")


def normalize_field(value: str) -> str:
    """NFKC-normalize, trim, and collapse internal whitespace."""
    return _WS_RE.sub(" ", unicodedata.normalize("NFKC", value).strip())


def _escape_separator(value: str) -> str:
    # keeps ids injective even for fields containing the separator itself
    return value.replace("\\", "\\\\").replace("|", "\\|")


def canonical_id(statute_name: str, article_label: str, paragraph_label: str | None = None) -> str:
    """Build the canonical ``statute|article|paragraph`` id for a provision.

    Deterministic and injective over distinct normalized inputs; the paragraph
    slot is left empty for article-level provisions.
    """
    statute = normalize_field(statute_name or "")
    article = normalize_field(article_label or "")
    if not statute:
        raise InvalidFieldError("statute_name must be non-empty")
    if not article:
        raise InvalidFieldError("article_label must be non-empty")
    paragraph = normalize_field(paragraph_label) if paragraph_label else ""
    return "|".join(_escape_separator(part) for part in (statute, article, paragraph))


@dataclass(frozen=True)
class Provision:
    """One paragraph-level statutory unit; the atomic retrieval item."""

    id: str
    statute_name: str
    article_label: str
    paragraph_label: str | None
    heading: str | None
    text: str
    language: str

    def citation(self) -> str:
        """Human-readable citation: statute, article, optional paragraph."""
        parts = [self.statute_name, self.article_label]
        if self.paragraph_label:
            parts.append(self.paragraph_label)
        return " ".join(parts)


@dataclass(frozen=True)
class CorpusManifest:
    source_path: str
    provision_count: int
    statute_count: int
    content_digest: str

    def to_dict(self) -> dict:
        return {
            "source_path": self.source_path,
            "provision_count": self.provision_count,
            "statute_count": self.statute_count,
            "content_digest": self.content_digest,
        }


class ProvisionStore:
    """Immutable id -> Provision map with stable input-order iteration."""

    def __init__(self, provisions: dict[str, Provision], manifest: CorpusManifest):
        self._provisions = provisions
        self.manifest = manifest

    def __len__(self) -> int:
        return len(self._provisions)

    def __contains__(self, provision_id: str) -> bool:
        return provision_id in self._provisions

    def __iter__(self):
        return iter(self._provisions.values())

    def ids(self) -> list[str]:
        return list(self._provisions.keys())

    def lookup(self, provision_id: str) -> Provision:
        """Return the ingested provision; unknown ids raise, never fabricate."""
        try:
            return self._provisions[provision_id]
        except KeyError:
            raise ProvisionNotFoundError(provision_id) from None

    def get(self, provision_id: str) -> Provision | None:
        return self._provisions.get(provision_id)


def _content_digest(provisions: dict[str, Provision]) -> str:
    """Digest over (id, text) pairs in ingestion order.

    Changes iff any provision id or text changes; metadata-only edits
    (heading, language) leave it untouched.
    """
    h = hashlib.sha256()
    for provision in provisions.values():
        h.update(provision.id.encode("utf-8"))
        h.update(b"\x1f")
        h.update(provision.text.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


def ingest_corpus(path: str | Path, default_language: str = "ko") -> ProvisionStore:
    """Load a JSONL statute corpus into an immutable store.

    Malformed records raise :class:`CorpusParseError` naming the line;
    two records canonicalizing to the same id raise
    :class:`DuplicateProvisionError` naming both lines. Input order is
    preserved for stable iteration.
    """
    path = Path(path)
    provisions: dict[str, Provision] = {}
    first_seen_line: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusParseError(line_no, "record is not an object")
            try:
                statute = record["statute"]
                article = record["article"]
                text = record["text"]
            except KeyError as exc:
                raise CorpusParseError(line_no, f"missing field {exc.args[0]!r}") from exc
            if not isinstance(text, str) or not text.strip():
                raise CorpusParseError(line_no, "text must be a non-empty string")
            language = record.get("lang") or default_language
            if language not in LANGUAGES:
                raise CorpusParseError(line_no, f"unknown lang {language!r}")
            try:
                provision_id = canonical_id(statute, article, record.get("paragraph"))
            except InvalidFieldError as exc:
                raise CorpusParseError(line_no, str(exc)) from exc
            if provision_id in provisions:
                raise DuplicateProvisionError(provision_id, first_seen_line[provision_id], line_no)
            paragraph = record.get("paragraph")
            provisions[provision_id] = Provision(
                id=provision_id,
                statute_name=normalize_field(statute),
                article_label=normalize_field(article),
                paragraph_label=normalize_field(paragraph) if paragraph else None,
                heading=record.get("heading") or None,
                text=text.strip(),
                language=language,
            )
            first_seen_line[provision_id] = line_no
    manifest = CorpusManifest(
        source_path=str(path),
        provision_count=len(provisions),
        statute_count=len({p.statute_name for p in provisions.values()}),
        content_digest=_content_digest(provisions),
    )
    return ProvisionStore(provisions, manifest)


def write_manifest_sidecar(store: ProvisionStore, corpus_path: str | Path | None = None) -> Path:
    """Write the manifest as ``<corpus>.manifest.json`` next to the corpus."""
    base = Path(corpus_path) if corpus_path is not None else Path(store.manifest.source_path)
    sidecar = base.with_name(base.name + ".manifest.json")
    sidecar.write_text(json.dumps(store.manifest.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
    return sidecar
