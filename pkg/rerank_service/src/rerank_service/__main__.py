"""CLI entry point: load the model, then serve until interrupted."""
from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .config import ServiceConfig
from .model import ModelLoadError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="rerank-service", description=__doc__)
    parser.add_argument("--model", default=None, help="cross-encoder checkpoint id or path")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--max-batch-size", type=int, default=None)
    parser.add_argument("--max-seq-len", type=int, default=None)
    args = parser.parse_args(argv)
    config = ServiceConfig.from_env(
        model=args.model,
        host=args.host,
        port=args.port,
        max_batch_size=args.max_batch_size,
        max_seq_length=args.max_seq_len,
    )
    try:
        app = create_app(config)
    except ModelLoadError as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
