"""Service configuration: CLI flags override environment, which overrides defaults."""
from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_MODEL = "BAAI/bge-reranker-v2-m3"

ENV_PREFIX = "RERANK_"


@dataclass(frozen=True)
class ServiceConfig:
    model: str = DEFAULT_MODEL
    host: str = "127.0.0.1"
    port: int = 8081
    max_batch_size: int = 32
    max_seq_length: int = 512

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if self.max_seq_length < 8:
            raise ValueError("max_seq_length must be >= 8")

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        values = {
            "model": os.environ.get(f"{ENV_PREFIX}MODEL", cls.model),
            "host": os.environ.get(f"{ENV_PREFIX}HOST", cls.host),
            "port": int(os.environ.get(f"{ENV_PREFIX}PORT", cls.port)),
            "max_batch_size": int(os.environ.get(f"{ENV_PREFIX}MAX_BATCH", cls.max_batch_size)),
            "max_seq_length": int(os.environ.get(f"{ENV_PREFIX}MAX_SEQ_LEN", cls.max_seq_length)),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
