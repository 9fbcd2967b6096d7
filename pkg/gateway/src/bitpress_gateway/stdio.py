"""The same message schema over newline-delimited JSON on stdio.

Requests: {"endpoint": "session" | "next" | "advance" | "health",
           "payload": {...}} with payload shapes identical to the HTTP
bodies ("next"/"advance" payloads additionally carry "session_id").
Responses are the HTTP response bodies; errors mirror the HTTP error
envelope.  One line in, one line out.
"""

from __future__ import annotations

import json
import sys
from typing import IO, Optional

from .model import LanguageModelBackend
from .quantize import SCALE
from .sessions import DEFAULT_TOP_K, SessionStore, TokenOutOfRangeError, UnknownSessionError


def _handle(store: SessionStore, request: dict) -> dict:
    endpoint = request.get("endpoint")
    payload = request.get("payload") or {}
    backend = store.backend
    if endpoint == "health":
        return {"status": "ok", "model_id": backend.model_id, "scale": SCALE,
                "vocab_size": backend.vocab_size, "default_top_k": DEFAULT_TOP_K}
    if endpoint == "session":
        tokens = payload.get("context_tokens")
        if tokens is None:
            text = payload.get("context_text")
            tokens = list(text.encode("utf-8")) if text is not None else []
        for t in tokens:
            if not (isinstance(t, int) and 0 <= t < backend.vocab_size):
                raise TokenOutOfRangeError(f"context token {t!r} outside vocab")
        session = store.create(tokens)
        return {"session_id": session.session_id, "model_id": backend.model_id,
                "step": session.step}
    if endpoint == "next":
        session = store.get(payload["session_id"])
        pairs, remainder = session.next_distribution(payload.get("top_k"))
        return {"model_id": backend.model_id, "step": session.step, "scale": SCALE,
                "probs": [list(p) for p in pairs], "remainder": remainder}
    if endpoint == "advance":
        session = store.get(payload["session_id"])
        return {"step": session.advance(payload["token_id"])}
    raise ValueError(f"unknown endpoint {endpoint!r}")


def serve_stdio(backend: LanguageModelBackend,
                stdin: Optional[IO[str]] = None,
                stdout: Optional[IO[str]] = None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    store = SessionStore(backend)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            response = _handle(store, request)
        except UnknownSessionError as exc:
            response = {"error": {"code": "unknown_session", "message": str(exc)}}
        except TokenOutOfRangeError as exc:
            response = {"error": {"code": "token_out_of_range", "message": str(exc)}}
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            response = {"error": {"code": "schema_violation", "message": str(exc)}}
        stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
        stdout.flush()
