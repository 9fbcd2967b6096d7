"""Deterministic probability models standing in for LLMs at desk scale.

All models speak the same handle protocol the coders consume: prime with
``reset(context)``, then alternate ``next_distribution()`` /
``add_token(t)``.  Two independently constructed handles fed identical
training data and token streams produce bit-identical distributions at
every step -- that determinism is the whole point of these stand-ins.

Count-based models keep probabilities as exact integer weights
(``P = (b*c + a) / (b*T + a*V)`` for smoothing constant ``a/b``), so no
float rounding enters the coding path at all.
"""

from __future__ import annotations

import hashlib
import struct
from fractions import Fraction
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .core import TokenDistribution, hash_context, normalize_distribution

TokenSeq = Sequence[int]


class CorpusTooShortError(ValueError):
    """Corpus must be longer than the model order to train anything."""


def byte_tokens(data: Union[bytes, str]) -> List[int]:
    """Default text alphabet: raw bytes, vocab 256."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return list(data)


def tokens_to_bytes(tokens: Iterable[int]) -> bytes:
    return bytes(tokens)


def _smoothing_fraction(alpha: Union[float, Fraction, str]) -> Fraction:
    # Floats are read back through their decimal repr so alpha=0.01 means
    # exactly 1/100, not the nearest binary float.
    if isinstance(alpha, Fraction):
        frac = alpha
    else:
        frac = Fraction(str(alpha))
    if frac <= 0:
        raise ValueError("smoothing constant must be > 0")
    return frac


class _ContextWindow:
    """Rolling window of the last ``order`` tokens."""

    __slots__ = ("order", "_buf")

    def __init__(self, order: int):
        self.order = order
        self._buf: Tuple[int, ...] = ()

    def push(self, token: int) -> None:
        if self.order == 0:
            return
        self._buf = (self._buf + (token,))[-self.order:]

    def key(self) -> Tuple[int, ...]:
        return self._buf

    def clear(self) -> None:
        self._buf = ()


class UniformModel:
    """Every token equally likely, forever.  The router's base model."""

    def __init__(self, vocab_size: int = 256):
        if vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        self._vocab = vocab_size
        self._dist = TokenDistribution.from_weights([1] * vocab_size, validate=False)
        self._context_hash = hash_context(())

    @property
    def vocab_size(self) -> int:
        return self._vocab

    @property
    def model_id(self) -> str:
        return f"uniform:v={self._vocab}"

    @property
    def context_hash(self) -> int:
        return self._context_hash

    def reset(self, context: TokenSeq = ()) -> "UniformModel":
        self._context_hash = hash_context(context)
        return self

    def fresh(self, context: TokenSeq = ()) -> "UniformModel":
        return UniformModel(self._vocab).reset(context)

    def next_distribution(self) -> TokenDistribution:
        return self._dist

    def add_token(self, token: int) -> None:
        if not (0 <= token < self._vocab):
            raise ValueError("token outside alphabet")


class AdaptiveContextModel:
    """Order-k model that learns counts online as tokens stream through.

    P(t | ctx) = (count(ctx, t) + alpha) / (total(ctx) + alpha * V), with
    counts updated only via :meth:`add_token`.  An unseen context yields
    the uniform distribution.
    """

    def __init__(self, vocab_size: int = 256, order: int = 0,
                 alpha: Union[float, Fraction, str] = 0.01):
        if vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if order < 0:
            raise ValueError("order must be >= 0")
        self._vocab = vocab_size
        self._order = order
        self._alpha = _smoothing_fraction(alpha)
        self._a = self._alpha.numerator
        self._b = self._alpha.denominator
        self._tables: Dict[Tuple[int, ...], np.ndarray] = {}
        self._window = _ContextWindow(order)
        self._context: Tuple[int, ...] = ()
        self._context_hash = hash_context(())
        self._unseen = TokenDistribution.from_weights(
            np.full(vocab_size, self._a, dtype=np.int64), validate=False)

    @property
    def vocab_size(self) -> int:
        return self._vocab

    @property
    def order(self) -> int:
        return self._order

    @property
    def alpha(self) -> Fraction:
        return self._alpha

    @property
    def model_id(self) -> str:
        return f"adaptive:k={self._order},a={self._alpha},v={self._vocab}"

    @property
    def context_hash(self) -> int:
        return self._context_hash

    def reset(self, context: TokenSeq = ()) -> "AdaptiveContextModel":
        """Clear learned counts and re-prime on ``context``.

        Priming tokens train the model exactly as streamed tokens do, so
        an encoder and decoder primed identically stay in lockstep.
        """
        self._tables.clear()
        self._window.clear()
        self._context = tuple(int(t) for t in context)
        self._context_hash = hash_context(self._context)
        for t in self._context:
            self.add_token(t)
        return self

    def fresh(self, context: TokenSeq = ()) -> "AdaptiveContextModel":
        return AdaptiveContextModel(self._vocab, self._order, self._alpha).reset(context)

    def next_distribution(self) -> TokenDistribution:
        counts = self._tables.get(self._window.key())
        if counts is None:
            return self._unseen
        weights = counts * self._b + self._a
        cum = np.cumsum(weights)
        return TokenDistribution(cum, int(cum[-1]), _validated=True)

    def add_token(self, token: int) -> None:
        if not (0 <= token < self._vocab):
            raise ValueError("token outside alphabet")
        key = self._window.key()
        counts = self._tables.get(key)
        if counts is None:
            counts = np.zeros(self._vocab, dtype=np.int64)
            self._tables[key] = counts
        counts[token] += 1
        self._window.push(token)


# Out-of-alphabet tokens in a static model get one raw weight unit against
# alphabet weights scaled by 2**32 -- i.e. a floor around 2**-32 of the
# in-alphabet mass, matching the coder's default probability floor.
_STATIC_FLOOR_SHIFT = 32

_NGRAM_MAGIC = b"BPNM"
_NGRAM_VERSION = 1


class StaticNGramModel:
    """Frozen order-k conditional frequency tables with uniform backoff.

    For a context seen in training, probability mass is the smoothed
    conditional frequency over the corpus alphabet; tokens never seen in
    the corpus keep a ~2**-32 floor so they stay encodable.  A context
    never seen in training backs off to the uniform distribution.
    """

    def __init__(self, order: int, vocab_size: int,
                 alpha: Union[float, Fraction, str],
                 tables: Dict[Tuple[int, ...], Dict[int, int]],
                 alphabet: Sequence[int]):
        self._order = order
        self._vocab = vocab_size
        self._alpha = _smoothing_fraction(alpha)
        self._tables = tables
        self._alphabet = sorted(int(t) for t in alphabet)
        self._window = _ContextWindow(order)
        self._context_hash = hash_context(())
        self._dist_cache: Dict[Tuple[int, ...], TokenDistribution] = {}
        self._uniform = TokenDistribution.from_weights([1] * vocab_size, validate=False)
        self._model_id = "ngram:" + hashlib.sha256(self.to_bytes()).hexdigest()[:16]

    @property
    def vocab_size(self) -> int:
        return self._vocab

    @property
    def order(self) -> int:
        return self._order

    @property
    def alpha(self) -> Fraction:
        return self._alpha

    @property
    def model_id(self) -> str:
        return self._model_id

    @property
    def context_hash(self) -> int:
        return self._context_hash

    def reset(self, context: TokenSeq = ()) -> "StaticNGramModel":
        self._window.clear()
        ctx = tuple(int(t) for t in context)
        self._context_hash = hash_context(ctx)
        for t in ctx:
            self._window.push(t)
        return self

    def fresh(self, context: TokenSeq = ()) -> "StaticNGramModel":
        clone = StaticNGramModel(self._order, self._vocab, self._alpha,
                                 self._tables, self._alphabet)
        clone._dist_cache = self._dist_cache  # frozen tables: cache is shareable
        return clone.reset(context)

    def next_distribution(self) -> TokenDistribution:
        key = self._window.key()
        counts = self._tables.get(key)
        if counts is None:
            return self._uniform
        dist = self._dist_cache.get(key)
        if dist is None:
            a, b = self._alpha.numerator, self._alpha.denominator
            scale = 1 << _STATIC_FLOOR_SHIFT
            weights = [1] * self._vocab
            for t in self._alphabet:
                weights[t] = (b * counts.get(t, 0) + a) * scale
            dist = TokenDistribution.from_weights(weights, validate=False)
            self._dist_cache[key] = dist
        return dist

    def add_token(self, token: int) -> None:
        if not (0 <= token < self._vocab):
            raise ValueError("token outside alphabet")
        self._window.push(token)

    def conditional_prob(self, context: TokenSeq, token: int) -> float:
        """Probe P(token | context) without touching stream state."""
        probe = self.fresh(context)
        return probe.next_distribution().prob(token)

    def to_bytes(self) -> bytes:
        """Versioned binary table dump.  Deterministic byte-for-byte."""
        out = bytearray()
        out += _NGRAM_MAGIC
        out += struct.pack(">BBI", _NGRAM_VERSION, self._order, self._vocab)
        out += struct.pack(">QQ", self._alpha.numerator, self._alpha.denominator)
        out += struct.pack(">H", len(self._alphabet))
        for t in self._alphabet:
            out += struct.pack(">I", t)
        out += struct.pack(">I", len(self._tables))
        for ctx in sorted(self._tables):
            for c in ctx:
                out += struct.pack(">I", c)
            entries = sorted(self._tables[ctx].items())
            out += struct.pack(">I", len(entries))
            for token, count in entries:
                out += struct.pack(">IQ", token, count)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "StaticNGramModel":
        if data[:4] != _NGRAM_MAGIC:
            raise ValueError("not a model table dump")
        off = 4
        version, order, vocab = struct.unpack_from(">BBI", data, off)
        if version != _NGRAM_VERSION:
            raise ValueError(f"unsupported model dump version {version}")
        off += 6
        a_num, a_den = struct.unpack_from(">QQ", data, off)
        off += 16
        (n_alpha,) = struct.unpack_from(">H", data, off)
        off += 2
        alphabet = []
        for _ in range(n_alpha):
            (t,) = struct.unpack_from(">I", data, off)
            off += 4
            alphabet.append(t)
        (n_ctx,) = struct.unpack_from(">I", data, off)
        off += 4
        tables: Dict[Tuple[int, ...], Dict[int, int]] = {}
        for _ in range(n_ctx):
            ctx = struct.unpack_from(f">{order}I", data, off) if order else ()
            off += 4 * order
            (n_entries,) = struct.unpack_from(">I", data, off)
            off += 4
            entries: Dict[int, int] = {}
            for _ in range(n_entries):
                token, count = struct.unpack_from(">IQ", data, off)
                off += 12
                entries[token] = count
            tables[tuple(ctx)] = entries
        return cls(order, vocab, Fraction(a_num, a_den), tables, alphabet)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "StaticNGramModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def train_ngram(corpus: Union[bytes, str, Sequence[int]], order: int,
                alpha: Union[float, Fraction, str] = 0.01,
                vocab_size: int = 256) -> StaticNGramModel:
    """Count conditional frequencies of ``corpus`` at the given order.

    Training is deterministic; the resulting model is frozen and its
    model_id is a content hash of the table dump.
    """
    if isinstance(corpus, (bytes, str)):
        tokens = byte_tokens(corpus)
    else:
        tokens = [int(t) for t in corpus]
    if len(tokens) <= order:
        raise CorpusTooShortError(
            f"corpus of {len(tokens)} tokens cannot train an order-{order} model")
    for t in tokens:
        if not (0 <= t < vocab_size):
            raise ValueError("corpus token outside alphabet")
    tables: Dict[Tuple[int, ...], Dict[int, int]] = {}
    for i in range(order, len(tokens)):
        ctx = tuple(tokens[i - order:i])
        cell = tables.setdefault(ctx, {})
        t = tokens[i]
        cell[t] = cell.get(t, 0) + 1
    return StaticNGramModel(order, vocab_size, alpha, tables, sorted(set(tokens)))


_SPLITMIX_C1 = np.uint64(0x9E3779B97F4A7C15)
_SPLITMIX_C2 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_C3 = np.uint64(0x94D049BB133111EB)


def _unit_noise(seed: int, step: int, n: int) -> np.ndarray:
    """Deterministic noise in [-1, 1), one value per token id."""
    mask = 0xFFFFFFFFFFFFFFFF
    # Scalar mixing in plain Python ints (mod 2**64); numpy sees only
    # array ops, which wrap silently.
    mix = ((seed & mask) * 0x9E3779B97F4A7C15 + (step + 1) * 0xD1B54A32D192ED03) & mask
    x = np.arange(n, dtype=np.uint64) * np.uint64(0x2545F4914F6CDD1D)
    x = x ^ np.uint64(mix)
    z = x + _SPLITMIX_C1
    z = z ^ (z >> np.uint64(30))
    z = z * _SPLITMIX_C2
    z = z ^ (z >> np.uint64(27))
    z = z * _SPLITMIX_C3
    z = z ^ (z >> np.uint64(31))
    u01 = (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)
    return 2.0 * u01 - 1.0


class PerturbedModel:
    """Wrap a model with seeded multiplicative probability noise.

    Output distribution = normalize(inner_probs * (1 + delta * u)) with
    u in [-1, 1) a pure function of (seed, step, token).  delta=0 returns
    the inner distribution object untouched, bit for bit.
    """

    def __init__(self, inner, delta: float, seed: int = 0):
        if delta < 0:
            raise ValueError("delta must be >= 0")
        self._inner = inner
        self._delta = float(delta)
        self._seed = int(seed)
        self._step = 0

    @property
    def vocab_size(self) -> int:
        return self._inner.vocab_size

    @property
    def model_id(self) -> str:
        return f"perturbed:d={self._delta},s={self._seed}:{self._inner.model_id}"

    @property
    def context_hash(self) -> int:
        return self._inner.context_hash

    @property
    def delta(self) -> float:
        return self._delta

    def reset(self, context: TokenSeq = ()) -> "PerturbedModel":
        self._inner.reset(context)
        self._step = 0
        return self

    def fresh(self, context: TokenSeq = ()) -> "PerturbedModel":
        return PerturbedModel(self._inner.fresh(context), self._delta, self._seed)

    def next_distribution(self) -> TokenDistribution:
        base = self._inner.next_distribution()
        if self._delta == 0.0:
            return base
        noise = _unit_noise(self._seed, self._step, base.vocab_size)
        return normalize_distribution(base.probs * (1.0 + self._delta * noise))

    def add_token(self, token: int) -> None:
        self._inner.add_token(token)
        self._step += 1


def perturb(model, delta: float, seed: int = 0) -> PerturbedModel:
    return PerturbedModel(model, delta, seed)


def next_distribution(model) -> TokenDistribution:
    """Module-level convenience mirroring the handle method."""
    return model.next_distribution()
