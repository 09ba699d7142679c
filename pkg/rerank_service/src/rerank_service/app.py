"""HTTP surface: ``POST /rerank`` and ``GET /healthz``.

Wire protocol: request ``{"query": str, "passages": [str]}``, response
``{"scores": [float]}`` with ``scores[i]`` scoring ``passages[i]``. Any
malformed body, including an empty passage list, is a 400. Scoring is
serialized around the model; the HTTP layer may still accept concurrent
connections.
"""
from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig
from .model import CrossEncoderModel


class RerankBody(BaseModel):
    query: str
    passages: list[str] = Field(min_length=1)


def create_app(config: ServiceConfig, model: CrossEncoderModel | None = None) -> FastAPI:
    """Build the service; the model loads eagerly so startup fails loudly."""
    if model is None:
        model = CrossEncoderModel(
            config.model,
            max_batch_size=config.max_batch_size,
            max_seq_length=config.max_seq_length,
        )
    app = FastAPI(title="rerank-service")
    app.state.model = model
    app.state.rerank_calls = 0
    scoring_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "model": model.model_id}

    @app.post("/rerank")
    def rerank(body: RerankBody):
        with scoring_lock:
            app.state.rerank_calls += 1
            scores = model.score(body.query, body.passages)
        return {"scores": scores}

    return app
