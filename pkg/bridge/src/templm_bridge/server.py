"""HTTP surface for the word-level scorer.

POST /score    next-token distribution (ltr or infill conditioning)
POST /generate server-side beam search
GET  /health   version, model name, vocabulary size

Responses carry (token, log-prob) entries covering the top_n most probable
words plus the reserved "__end__" entry and a "__rest__" aggregate, so the
exponentiated entries always sum to one. 400 on malformed requests, 503
until the model is ready. Handlers are stateless; concurrent requests are
safe because scoring never mutates the model.
"""

from __future__ import annotations

import math
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .model import END_WORD, WordScorer

VERSION = "0.1.0"
MIN_LOG = math.log(1e-300)


class ScoreRequest(BaseModel):
    mode: str = "ltr"
    data: dict[str, list[str]] = Field(default_factory=dict)
    prefix: list[str] = Field(default_factory=list)
    infill_left: list[str] = Field(default_factory=list)
    infill_right: list[str] = Field(default_factory=list)
    top_n: int = 1000


class GenerateRequest(BaseModel):
    data: dict[str, list[str]] = Field(default_factory=dict)
    k: int = 1
    max_len: int = 10


def create_app(scorer: WordScorer | None, model_name: str = "char-transformer") -> FastAPI:
    app = FastAPI(title="templm-bridge", version=VERSION)
    state: dict[str, Any] = {"scorer": scorer, "model_name": model_name}

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request"})

    def ready() -> WordScorer | None:
        return state["scorer"]

    app.state.bridge = state

    @app.get("/health")
    def health():
        scorer_ = ready()
        if scorer_ is None:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        return {
            "version": VERSION,
            "model": state["model_name"],
            "vocab_size": len(scorer_.vocab),
        }

    @app.post("/score")
    def score(req: ScoreRequest):
        scorer_ = ready()
        if scorer_ is None:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        if req.mode not in ("ltr", "infill") or req.top_n < 1:
            return JSONResponse(status_code=400, content={"error": "malformed request"})
        dist = scorer_.next_word_logprobs(
            req.data,
            req.prefix,
            mode=req.mode,
            infill_left=req.infill_left,
            infill_right=req.infill_right,
        )
        ranked = sorted(dist.logprobs.items(), key=lambda kv: (-kv[1], kv[0]))
        head = ranked[: req.top_n]
        names = {w for w, _ in head}
        if END_WORD not in names:
            head.append((END_WORD, dist.logprobs[END_WORD]))
            names.add(END_WORD)
        rest_mass = math.fsum(
            math.exp(lp) for w, lp in ranked if w not in names
        )
        entries = [[w, lp] for w, lp in head]
        entries.append(["__rest__", math.log(rest_mass) if rest_mass > 0 else MIN_LOG])
        return {"entries": entries}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        scorer_ = ready()
        if scorer_ is None:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        if req.k < 1 or req.max_len < 1:
            return JSONResponse(status_code=400, content={"error": "malformed request"})
        tokens = scorer_.beam_generate(req.data, req.k, req.max_len)
        return {"tokens": list(tokens)}

    return app
