"""Client for a distribution-serving gateway (`http:` / `proc:` oracles).

The gateway sends integer probability masses on a fixed scale (top-k
pairs plus a remainder for the unsent tail); this client rebuilds the
full weight vector and hands the coder an exact TokenDistribution, so
encoder and decoder machines agree bit for bit however their floats
behave.  The stream-header model id folds in the requested top_k: the
effective coding distribution depends on it, so a mismatched decode
fails fast instead of desynchronizing.
"""

from __future__ import annotations

import json
import urllib.request
from typing import Dict, List, Optional, Sequence, Tuple

from .core import TokenDistribution, hash_context
from .oracles import OracleFailureError, ProcClient


class GatewayProtocolError(RuntimeError):
    pass


def weights_from_response(pairs: Sequence[Sequence[int]], remainder: int,
                          scale: int, vocab_size: int) -> List[int]:
    """Rebuild the full integer weight vector from a top-k response.

    The remainder is spread evenly over unsent tokens, leftovers one
    unit each to the lowest unsent ids.  Raises if the response violates
    the gateway's mass invariants.
    """
    weights = [0] * vocab_size
    for token, mass in pairs:
        if not (0 <= token < vocab_size):
            raise GatewayProtocolError(f"token {token} outside vocab {vocab_size}")
        if mass < 1:
            raise GatewayProtocolError("sent probability mass below one unit")
        if weights[token]:
            raise GatewayProtocolError(f"duplicate token {token} in response")
        weights[token] = mass
    unsent = [t for t in range(vocab_size) if weights[t] == 0]
    if unsent:
        base, extra = divmod(remainder, len(unsent))
        if base < 1:
            raise GatewayProtocolError("remainder cannot cover unsent tokens")
        for i, t in enumerate(unsent):
            weights[t] = base + (1 if i < extra else 0)
    elif remainder != 0:
        raise GatewayProtocolError("full-vocab response with nonzero remainder")
    if sum(weights) != scale:
        raise GatewayProtocolError("masses do not sum to the scale constant")
    return weights


class HttpGatewayTransport:
    def __init__(self, base_url: str, timeout: float = 30.0):
        self._base = base_url.rstrip("/")
        self._timeout = timeout

    def request(self, endpoint: str, payload: Optional[dict]) -> dict:
        if endpoint == "health":
            url, data = f"{self._base}/health", None
        elif endpoint == "session":
            url, data = f"{self._base}/session", payload
        else:
            sid = payload.pop("session_id")
            url, data = f"{self._base}/session/{sid}/{endpoint}", payload
        body = None if data is None else json.dumps(data).encode("utf-8")
        req = urllib.request.Request(
            url, data=body, method="GET" if body is None else "POST",
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self._timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", errors="replace")
            raise OracleFailureError(f"gateway HTTP {exc.code}: {detail}") from None
        except (urllib.error.URLError, json.JSONDecodeError) as exc:
            raise OracleFailureError(f"gateway unreachable: {exc}") from None


class StdioGatewayTransport:
    """Same schema over a `proc:` line-protocol subprocess."""

    def __init__(self, client: ProcClient):
        self._client = client

    def request(self, endpoint: str, payload: Optional[dict]) -> dict:
        return self._client.call({"endpoint": endpoint, "payload": payload or {}})


class GatewayModel:
    """Model handle backed by a gateway session."""

    def __init__(self, transport, top_k: Optional[int] = None,
                 context: Sequence[int] = ()):
        self._transport = transport
        self._top_k = top_k
        health = transport.request("health", None)
        try:
            self._vocab = int(health["vocab_size"])
            self._scale = int(health["scale"])
            self._server_model_id = str(health["model_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayProtocolError(f"malformed health response: {exc}") from None
        self._session_id: Optional[str] = None
        self._context_hash = 0
        self.reset(context)

    @property
    def vocab_size(self) -> int:
        return self._vocab

    @property
    def model_id(self) -> str:
        k = self._top_k if self._top_k is not None else "full"
        return f"{self._server_model_id}+k={k}"

    @property
    def context_hash(self) -> int:
        return self._context_hash

    def reset(self, context: Sequence[int] = ()) -> "GatewayModel":
        context = [int(t) for t in context]
        resp = self._transport.request("session", {"context_tokens": context})
        try:
            self._session_id = str(resp["session_id"])
            step = int(resp["step"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayProtocolError(f"malformed session response: {exc}") from None
        if step != len(context):
            raise GatewayProtocolError("session step does not match context length")
        self._context_hash = hash_context(context)
        return self

    def fresh(self, context: Sequence[int] = ()) -> "GatewayModel":
        return GatewayModel(self._transport, self._top_k, context)

    def next_distribution(self) -> TokenDistribution:
        payload: Dict = {"session_id": self._session_id}
        if self._top_k is not None:
            payload["top_k"] = self._top_k
        resp = self._transport.request("next", payload)
        try:
            pairs = resp["probs"]
            remainder = int(resp["remainder"])
            scale = int(resp["scale"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayProtocolError(f"malformed distribution response: {exc}") from None
        if scale != self._scale:
            raise GatewayProtocolError("gateway changed its quantization scale mid-session")
        weights = weights_from_response(pairs, remainder, scale, self._vocab)
        return TokenDistribution.from_weights(weights, validate=False)

    def add_token(self, token: int) -> None:
        resp = self._transport.request(
            "advance", {"session_id": self._session_id, "token_id": int(token)})
        if "step" not in resp:
            raise GatewayProtocolError("malformed advance response")
