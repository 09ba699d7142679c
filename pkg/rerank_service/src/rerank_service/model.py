"""Cross-encoder wrapper: (query, passage) pairs in, relevance scores out.

Loads any sequence-classification checkpoint (hub id or local path). Single-
logit heads score with the raw logit; multi-label heads score with the
softmax probability of the last label. Inference runs in eval mode under
``torch.inference_mode``, so identical inputs score identically for the
lifetime of the process.
"""
from __future__ import annotations

from typing import Sequence

import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer


class ModelLoadError(RuntimeError):
    pass


class CrossEncoderModel:
    def __init__(self, model_id: str, max_batch_size: int = 32, max_seq_length: int = 512):
        self.model_id = model_id
        self.max_batch_size = max_batch_size
        self.max_seq_length = max_seq_length
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModelForSequenceClassification.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load cross-encoder {model_id!r}: {exc}") from exc
        self.model.eval()

    @torch.inference_mode()
    def score(self, query: str, passages: Sequence[str]) -> list[float]:
        """One finite score per passage, computed in max_batch_size chunks."""
        scores: list[float] = []
        for start in range(0, len(passages), self.max_batch_size):
            chunk = list(passages[start : start + self.max_batch_size])
            encoded = self.tokenizer(
                [query] * len(chunk),
                chunk,
                truncation=True,
                max_length=self.max_seq_length,
                padding=True,
                return_tensors="pt",
            )
            logits = self.model(**encoded).logits
            if logits.shape[-1] == 1:
                chunk_scores = logits[:, 0]
            else:
                chunk_scores = torch.softmax(logits, dim=-1)[:, -1]
            scores.extend(float(s) for s in chunk_scores)
        return scores
