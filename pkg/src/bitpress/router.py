"""Per-text model selection from a shared registry via an embedding index.

The embedder is a hashed character-trigram term-frequency vector: no
learned weights, so sender and receiver always agree -- routing is a pure
function of (text, index), which is the precondition for lossless routed
round trips.  The index is a flat exhaustive cosine scan; index sizes at
desk scale make anything fancier pointless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import blockcoder
from .blockcoder import BlockStream, CoderConfig
from .core import fnv1a64
from .models import byte_tokens, tokens_to_bytes

EMBED_DIM = 256
DEFAULT_K = 10


class UnknownModelIdError(KeyError):
    pass


def embed(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Hashed char-trigram TF vector, L2-normalized; zero for empty text."""
    vec = np.zeros(dim, dtype=np.float64)
    if not text:
        return vec
    if len(text) < 3:
        grams: Iterable[str] = (text,)
    else:
        grams = (text[i:i + 3] for i in range(len(text) - 2))
    for gram in grams:
        vec[fnv1a64(gram.encode("utf-8")) % dim] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    # Embeddings are unit-norm (or zero), so the dot product suffices.
    return float(np.dot(a, b))


class ModelRegistry:
    """Named probability models plus one designated base model.

    Values are trained/parameterized model objects; a fresh single-stream
    handle is spawned per coding operation via each model's ``fresh()``.
    """

    def __init__(self, base_id: str, base_model):
        self._models: Dict[str, object] = {base_id: base_model}
        self._base_id = base_id

    @property
    def base_id(self) -> str:
        return self._base_id

    @property
    def model_ids(self) -> List[str]:
        return sorted(self._models)

    def add(self, model_id: str, model) -> None:
        if model_id in self._models:
            raise ValueError(f"duplicate model id {model_id!r}")
        self._models[model_id] = model

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._models

    def get(self, model_id: str):
        try:
            return self._models[model_id]
        except KeyError:
            raise UnknownModelIdError(model_id) from None

    def fresh_handle(self, model_id: str, context: Sequence[int] = ()):
        return self.get(model_id).fresh(context)


@dataclass
class RouteIndex:
    """Embedding entries mapping to registry model ids."""

    vectors: np.ndarray  # (n, dim)
    model_ids: List[str]
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.model_ids) != self.vectors.shape[0]:
            raise ValueError("vector/id count mismatch")

    def __len__(self) -> int:
        return len(self.model_ids)

    def save(self, path) -> None:
        payload = {
            "dim": int(self.vectors.shape[1]),
            "k": self.k,
            "entries": [
                {"model_id": mid, "vector": [round(float(x), 12) for x in vec]}
                for mid, vec in zip(self.model_ids, self.vectors)
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "RouteIndex":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        vectors = np.array([e["vector"] for e in payload["entries"]], dtype=np.float64)
        if vectors.size == 0:
            vectors = vectors.reshape(0, payload["dim"])
        ids = [e["model_id"] for e in payload["entries"]]
        return cls(vectors, ids, payload["k"])


def build_index(samples: Sequence[Tuple[str, str]], registry: ModelRegistry,
                k: int = DEFAULT_K) -> RouteIndex:
    """One entry per (text, model_id) sample; duplicates retained."""
    if not samples:
        raise ValueError("cannot build an index from zero samples")
    ids = []
    rows = []
    for text, model_id in samples:
        if model_id not in registry:
            raise UnknownModelIdError(model_id)
        rows.append(embed(text))
        ids.append(model_id)
    return RouteIndex(np.vstack(rows), ids, k)


def route(text: str, index: RouteIndex, registry: ModelRegistry) -> str:
    """Cosine k-NN majority vote; ties break to the lowest model id."""
    if not text:
        return registry.base_id
    if len(index) == 0:
        raise ValueError("cannot route against an empty index")
    query = embed(text)
    sims = index.vectors @ query
    k = min(index.k, len(index))
    # Stable ordering: descending similarity, insertion order on ties.
    order = np.argsort(-sims, kind="stable")[:k]
    votes: Dict[str, int] = {}
    for pos in order:
        mid = index.model_ids[int(pos)]
        votes[mid] = votes.get(mid, 0) + 1
    best = min(votes.items(), key=lambda kv: (-kv[1], kv[0]))
    return best[0]


def routed_compress(text: str, index: RouteIndex, registry: ModelRegistry,
                    config: CoderConfig = CoderConfig()) -> BlockStream:
    """Compress under the routed model, recording the registry id in the
    header so a receiver holding the same registry selects the same model."""
    model_id = route(text, index, registry)
    handle = registry.fresh_handle(model_id)
    return blockcoder.encode(byte_tokens(text), handle, config,
                             stream_model_id=model_id)


def routed_decompress(stream: BlockStream, registry: ModelRegistry,
                      config: CoderConfig = CoderConfig()) -> str:
    model_id = stream.header.model_id
    if model_id not in registry:
        raise UnknownModelIdError(model_id)
    handle = registry.fresh_handle(model_id)
    tokens = blockcoder.decode(stream, handle, config, stream_model_id=model_id)
    return tokens_to_bytes(tokens).decode("utf-8")


@dataclass
class RoutingEvaluation:
    accuracy: float
    per_domain: Dict[str, Tuple[int, int]]  # model_id -> (correct, total)

    def table(self) -> List[Tuple[str, int, int, float]]:
        return [(mid, c, n, c / n) for mid, (c, n) in sorted(self.per_domain.items())]


def evaluate_routing(labeled: Sequence[Tuple[str, str]], index: RouteIndex,
                     registry: ModelRegistry, mode: str = "full",
                     prompt_lens: Optional[Sequence[Optional[int]]] = None) -> RoutingEvaluation:
    """Routing accuracy against labels.

    mode="prompt_only" truncates each text at its prompt_len byte offset
    (texts without one are used whole).
    """
    if mode not in ("full", "prompt_only"):
        raise ValueError("mode must be 'full' or 'prompt_only'")
    correct = 0
    per_domain: Dict[str, List[int]] = {}
    for i, (text, true_id) in enumerate(labeled):
        if mode == "prompt_only" and prompt_lens is not None and prompt_lens[i] is not None:
            text = text.encode("utf-8")[:prompt_lens[i]].decode("utf-8", errors="ignore")
        got = route(text, index, registry)
        cell = per_domain.setdefault(true_id, [0, 0])
        cell[1] += 1
        if got == true_id:
            cell[0] += 1
            correct += 1
    if not labeled:
        raise ValueError("no labeled examples")
    return RoutingEvaluation(
        accuracy=correct / len(labeled),
        per_domain={k: (v[0], v[1]) for k, v in per_domain.items()},
    )


def load_labeled_jsonl(path) -> Tuple[List[Tuple[str, str]], List[Optional[int]]]:
    """Read {"text", "model_id", "prompt_len"?} records."""
    texts: List[Tuple[str, str]] = []
    prompt_lens: List[Optional[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "text" not in rec or "model_id" not in rec:
                raise ValueError(f"line {line_no}: record needs 'text' and 'model_id'")
            texts.append((rec["text"], rec["model_id"]))
            prompt_lens.append(rec.get("prompt_len"))
    return texts, prompt_lens
