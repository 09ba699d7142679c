from __future__ import annotations

import json
import os

import pytest
from hypothesis import assume, given, strategies as st

from lexhop.corpus import (
    canonical_id,
    ingest_corpus,
    normalize_field,
    write_manifest_sidecar,
)
from lexhop.errors import (
    CorpusParseError,
    DuplicateProvisionError,
    InvalidFieldError,
    ProvisionNotFoundError,
)

from mockcorpus import corpus_records, write_jsonl


def test_canonical_id_without_paragraph():
    assert canonical_id("형법", "제225조", None) == "형법|제225조|"


def test_canonical_id_with_paragraph():
    assert canonical_id("공직선거법", "8조의9", "1항") == "공직선거법|8조의9|1항"


def test_canonical_id_whitespace_normalization():
    assert canonical_id("공직선거법 ", "8조의9", "1항") == canonical_id("공직선거법", "8조의9", "1항")
    assert canonical_id("a  b", "c\td") == canonical_id("a b", "c d")


def test_canonical_id_empty_fields_rejected():
    with pytest.raises(InvalidFieldError):
        canonical_id("", "제1조")
    with pytest.raises(InvalidFieldError):
        canonical_id("형법", "  ")


@given(
    st.text(min_size=1).filter(lambda s: s.strip()),
    st.text(min_size=1).filter(lambda s: s.strip()),
)
def test_canonical_id_idempotent_under_renormalization(statute, article):
    try:
        first = canonical_id(statute, article)
    except InvalidFieldError:
        assume(False)  # field vanished under normalization
        return
    assert canonical_id(normalize_field(statute), normalize_field(article)) == first


def test_canonical_id_injective_with_separator_in_fields():
    assert canonical_id("a|b", "c") != canonical_id("a", "b|c")
    assert canonical_id("a\\", "b") != canonical_id("a", "\\b")


def test_ingest_counts(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", corpus_records()[:3])
    store = ingest_corpus(path)
    assert len(store) == 3
    assert store.manifest.provision_count == 3
    assert store.manifest.statute_count == 1


def test_ingest_preserves_order_and_roundtrips(tmp_path):
    records = corpus_records()
    path = write_jsonl(tmp_path / "c.jsonl", records)
    store = ingest_corpus(path)
    expected_ids = [canonical_id(r["statute"], r["article"], r["paragraph"]) for r in records]
    assert store.ids() == expected_ids
    for record, pid in zip(records, expected_ids):
        assert store.lookup(pid).text == record["text"]


def test_ingest_duplicate_id_conflict(tmp_path):
    records = corpus_records()[:2] + [corpus_records()[0]]
    path = write_jsonl(tmp_path / "c.jsonl", records)
    with pytest.raises(DuplicateProvisionError) as err:
        ingest_corpus(path)
    assert err.value.first_line == 1
    assert err.value.second_line == 3


def test_ingest_duplicate_after_normalization(tmp_path):
    first = corpus_records()[0]
    second = dict(first, statute=first["statute"] + "  ")
    path = write_jsonl(tmp_path / "c.jsonl", [first, second])
    with pytest.raises(DuplicateProvisionError):
        ingest_corpus(path)


def test_ingest_malformed_json_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    good = json.dumps(corpus_records()[0], ensure_ascii=False)
    path.write_text(good + "\n{broken\n", encoding="utf-8")
    with pytest.raises(CorpusParseError) as err:
        ingest_corpus(path)
    assert err.value.line_no == 2


def test_ingest_missing_field_and_empty_text(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps({"statute": "x", "article": "a"}) + "\n", encoding="utf-8")
    with pytest.raises(CorpusParseError):
        ingest_corpus(path)
    path.write_text(
        json.dumps({"statute": "x", "article": "a", "text": "   "}) + "\n", encoding="utf-8"
    )
    with pytest.raises(CorpusParseError):
        ingest_corpus(path)


def test_lookup_unknown_id(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", corpus_records()[:3])
    store = ingest_corpus(path)
    with pytest.raises(ProvisionNotFoundError):
        store.lookup("missing|x|")
    assert store.get("missing|x|") is None


def test_content_digest_tracks_ids_and_text_only(tmp_path):
    records = corpus_records()
    base = ingest_corpus(write_jsonl(tmp_path / "a.jsonl", records))
    same = ingest_corpus(write_jsonl(tmp_path / "b.jsonl", [dict(r) for r in records]))
    assert base.manifest.content_digest == same.manifest.content_digest

    text_changed = [dict(r) for r in records]
    text_changed[0]["text"] += " 추가"
    changed = ingest_corpus(write_jsonl(tmp_path / "d.jsonl", text_changed))
    assert changed.manifest.content_digest != base.manifest.content_digest

    heading_changed = [dict(r) for r in records]
    heading_changed[0]["heading"] = "다른 제목"
    metadata_only = ingest_corpus(write_jsonl(tmp_path / "e.jsonl", heading_changed))
    assert metadata_only.manifest.content_digest == base.manifest.content_digest


def test_full_corpus_counts_when_present():
    path = os.environ.get("LEXHOP_CORPUS")
    if not path or not os.path.exists(path):
        pytest.skip("full statute corpus not present (set LEXHOP_CORPUS to check 608/233k counts)")
    store = ingest_corpus(path)
    assert store.manifest.statute_count == 608
    assert store.manifest.provision_count == pytest.approx(233544, abs=2500)


def test_manifest_sidecar(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", corpus_records())
    store = ingest_corpus(path)
    sidecar = write_manifest_sidecar(store)
    data = json.loads(sidecar.read_text(encoding="utf-8"))
    assert data["provision_count"] == 10
    assert data["statute_count"] == 1
    assert data["content_digest"] == store.manifest.content_digest
