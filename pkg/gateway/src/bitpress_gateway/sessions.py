"""Stateful token-stream sessions over a shared frozen model."""

from __future__ import annotations

import itertools
import threading
from typing import Dict, List, Optional, Sequence, Tuple

from .model import LanguageModelBackend
from .quantize import SCALE, quantize_top_k

DEFAULT_TOP_K = 512


class UnknownSessionError(KeyError):
    pass


class TokenOutOfRangeError(ValueError):
    pass


class Session:
    """One strictly sequential token stream."""

    def __init__(self, session_id: str, backend: LanguageModelBackend,
                 context: Sequence[int]):
        self.session_id = session_id
        self._backend = backend
        self._state = backend.initial_state()
        self.step = 0
        for token in context:
            self.advance(token)

    def advance(self, token: int) -> int:
        if not (0 <= token < self._backend.vocab_size):
            raise TokenOutOfRangeError(
                f"token {token} outside vocab {self._backend.vocab_size}")
        self._state = self._backend.advance(self._state, token)
        self.step += 1
        return self.step

    def next_distribution(self, top_k: Optional[int] = None) -> Tuple[List, int]:
        probs = self._backend.next_probs(self._state)
        return quantize_top_k(probs, top_k if top_k else DEFAULT_TOP_K)


class SessionStore:
    def __init__(self, backend: LanguageModelBackend):
        self._backend = backend
        self._sessions: Dict[str, Session] = {}
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    @property
    def backend(self) -> LanguageModelBackend:
        return self._backend

    def create(self, context: Sequence[int]) -> Session:
        with self._lock:
            session_id = f"s{next(self._counter)}"
        session = Session(session_id, self._backend, context)
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(session_id) from None

    def drop(self, session_id: str) -> None:
        self._sessions.pop(session_id, None)
