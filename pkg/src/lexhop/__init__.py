"""Provision-grounded multi-hop legal QA over a statute corpus.

The package splits into: corpus ingestion (``corpus``), BM25 retrieval
(``sparse``), the chat-completion gateway with caching and a mock backend
(``gateway``), pair-scorer reranking (``rerank``), prompt assembly
(``prompts``), the provision-guided pipeline (``pipeline``), non-iterative
baselines (``baselines``), evaluation metrics (``metrics``), and the batch
harness with reporting (``harness``). The ``lexhop`` CLI fronts the harness.
"""

__version__ = "0.1.0"

from .corpus import CorpusManifest, Provision, ProvisionStore, canonical_id, ingest_corpus
from .dataset import QAInstance, hop_counts, load_dataset
from .gateway import (
    ChatGateway,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    MockBackend,
    OpenAICompatBackend,
    ResponseCache,
    UsageLedger,
)
from .metrics import (
    JudgeSample,
    LfEvalScore,
    ProvisionScore,
    TokenScore,
    lf_eval,
    normalize_answer,
    provision_score,
    token_f1,
)
from .pipeline import (
    HopEvidence,
    ParametricProvision,
    PipelineConfig,
    PipelineTrace,
    run_parser,
)
from .prompts import PromptLibrary
from .rerank import PassthroughScorer, RemoteScorer, ScriptedScorer, rerank
from .sparse import Bm25Index, Bm25Params, RetrievalCandidate, TokenizerConfig, build_index, tokenize

__all__ = [
    "Bm25Index",
    "Bm25Params",
    "ChatGateway",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "CorpusManifest",
    "HopEvidence",
    "JudgeSample",
    "LfEvalScore",
    "MockBackend",
    "OpenAICompatBackend",
    "ParametricProvision",
    "PassthroughScorer",
    "PipelineConfig",
    "PipelineTrace",
    "PromptLibrary",
    "Provision",
    "ProvisionScore",
    "ProvisionStore",
    "QAInstance",
    "RemoteScorer",
    "ResponseCache",
    "RetrievalCandidate",
    "ScriptedScorer",
    "TokenScore",
    "TokenizerConfig",
    "UsageLedger",
    "build_index",
    "canonical_id",
    "hop_counts",
    "ingest_corpus",
    "lf_eval",
    "load_dataset",
    "normalize_answer",
    "provision_score",
    "rerank",
    "run_parser",
    "token_f1",
    "tokenize",
]
