from __future__ import annotations

from pathlib import Path

import pytest
import torch
from transformers import BertConfig, BertForSequenceClassification, BertTokenizer

from rerank_service.app import create_app
from rerank_service.config import ServiceConfig
from rerank_service.model import CrossEncoderModel


def build_tiny_checkpoint(out: Path, num_labels: int = 1, seed: int = 0) -> Path:
    """Write a small randomly-initialized cross-encoder checkpoint to disk.

    Real architecture, real tokenizer, deterministic weights; tiny enough
    that the whole conformance suite runs in seconds on CPU.
    """
    out.mkdir(parents=True, exist_ok=True)
    vocab = (
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        + [chr(c) for c in range(ord("a"), ord("z") + 1)]
        + ["##" + chr(c) for c in range(ord("a"), ord("z") + 1)]
        + ["law", "court", "rule", "fine", "passage", "query"]
    )
    (out / "vocab.txt").write_text("\n".join(vocab), encoding="utf-8")
    BertTokenizer(str(out / "vocab.txt")).save_pretrained(out)
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=96,
        num_labels=num_labels,
    )
    BertForSequenceClassification(config).save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory) -> Path:
    return build_tiny_checkpoint(tmp_path_factory.mktemp("xenc") / "tiny")


@pytest.fixture(scope="session")
def service_config(tiny_checkpoint) -> ServiceConfig:
    return ServiceConfig(model=str(tiny_checkpoint), max_batch_size=8, max_seq_length=64)


@pytest.fixture(scope="session")
def app(service_config):
    return create_app(service_config)


@pytest.fixture(scope="session")
def tiny_model(service_config) -> CrossEncoderModel:
    return CrossEncoderModel(service_config.model, max_batch_size=8, max_seq_length=64)
