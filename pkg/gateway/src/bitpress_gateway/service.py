"""HTTP JSON wire protocol.

Endpoints::

    POST /session                   {context_tokens | context_text, ...}
    POST /session/{id}/next        {top_k?} -> quantized distribution
    POST /session/{id}/advance     {token_id}
    GET  /health

Distribution responses carry integer masses on a fixed 32-bit scale plus
a remainder for the unsent tail; identical (model, context) always yields
byte-identical responses.  Errors are machine-readable: {"error":
{"code", "message"}} with 404 for unknown sessions, 400 for domain
violations, 422 for schema violations.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .model import LanguageModelBackend
from .quantize import SCALE
from .sessions import DEFAULT_TOP_K, SessionStore, TokenOutOfRangeError, UnknownSessionError


class SessionRequest(BaseModel):
    model_config = {"extra": "forbid"}
    context_tokens: Optional[List[int]] = None
    context_text: Optional[str] = None

    @model_validator(mode="after")
    def _one_context_form(self):
        if self.context_tokens is not None and self.context_text is not None:
            raise ValueError("give context_tokens or context_text, not both")
        return self

    def tokens(self) -> List[int]:
        if self.context_tokens is not None:
            return self.context_tokens
        if self.context_text is not None:
            return list(self.context_text.encode("utf-8"))
        return []


class SessionResponse(BaseModel):
    session_id: str
    model_id: str
    step: int


class DistributionRequest(BaseModel):
    model_config = {"extra": "forbid"}
    top_k: Optional[int] = Field(default=None, ge=1)


class DistributionResponse(BaseModel):
    model_id: str
    step: int
    scale: int
    probs: List[Tuple[int, int]]
    remainder: int


class AdvanceRequest(BaseModel):
    model_config = {"extra": "forbid"}
    token_id: int = Field(ge=0)


class AdvanceResponse(BaseModel):
    step: int


class HealthResponse(BaseModel):
    status: str
    model_id: str
    scale: int
    vocab_size: int
    default_top_k: int


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app(backend: LanguageModelBackend) -> FastAPI:
    app = FastAPI(title="bitpress-gateway", docs_url=None, redoc_url=None)
    store = SessionStore(backend)
    app.state.store = store

    @app.exception_handler(UnknownSessionError)
    async def _unknown_session(_req: Request, exc: UnknownSessionError):
        return _error(404, "unknown_session", f"no session {exc.args[0]!r}")

    @app.exception_handler(TokenOutOfRangeError)
    async def _bad_token(_req: Request, exc: TokenOutOfRangeError):
        return _error(400, "token_out_of_range", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _bad_schema(_req: Request, exc: RequestValidationError):
        return _error(422, "schema_violation", str(exc.errors()))

    @app.post("/session", response_model=SessionResponse)
    def create_session(req: SessionRequest) -> SessionResponse:
        tokens = req.tokens()
        for t in tokens:
            if not (0 <= t < backend.vocab_size):
                raise TokenOutOfRangeError(f"context token {t} outside vocab")
        session = store.create(tokens)
        return SessionResponse(session_id=session.session_id,
                               model_id=backend.model_id, step=session.step)

    @app.post("/session/{session_id}/next", response_model=DistributionResponse)
    def next_distribution(session_id: str, req: DistributionRequest) -> DistributionResponse:
        session = store.get(session_id)
        pairs, remainder = session.next_distribution(req.top_k)
        return DistributionResponse(model_id=backend.model_id, step=session.step,
                                    scale=SCALE, probs=pairs, remainder=remainder)

    @app.post("/session/{session_id}/advance", response_model=AdvanceResponse)
    def advance(session_id: str, req: AdvanceRequest) -> AdvanceResponse:
        session = store.get(session_id)
        return AdvanceResponse(step=session.advance(req.token_id))

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", model_id=backend.model_id, scale=SCALE,
                              vocab_size=backend.vocab_size,
                              default_top_k=DEFAULT_TOP_K)

    return app
