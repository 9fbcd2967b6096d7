"""Alphabet, probability-distribution, and interval primitives.

Everything the coders do reduces to exact integer arithmetic on a fixed
binary-fraction grid: probabilities, CDF boundaries, and interval bounds
all live on multiples of 2**-FRACTION_BITS.  All products are truncated
toward zero, so an encoder and decoder running the same steps produce
bit-identical interval trajectories on any platform.

A :class:`TokenDistribution` is stored as cumulative positive integer
weights; the grid CDF is derived lazily per index (the coders only probe
a handful of boundaries per step, so materializing a full vocab-sized
fixed-point CDF every step would be wasted work).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Protocol, Sequence, Union

import numpy as np

FRACTION_BITS = 128
ONE = 1 << FRACTION_BITS

# Probability floor applied when building distributions from raw float
# vectors.  Guarantees every token stays encodable.
DEFAULT_P_FLOOR = 2.0 ** -32

# Scale used when converting float probabilities to integer weights.
# 62 bits keeps the weights (and their cumulative sums over a <=2**16
# vocab) comfortably inside int64 for the numpy fast path.
_FLOAT_WEIGHT_BITS = 62
_FLOAT_WEIGHT_SCALE = 1 << _FLOAT_WEIGHT_BITS

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class EmptyVectorError(ValueError):
    """Raised when a probability vector has no entries."""


class AllZeroError(ValueError):
    """Raised when a probability vector has no positive mass."""


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash; stable across platforms and runs."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hash_context(tokens: Iterable[int]) -> int:
    """Hash a priming-context token sequence to 64 bits.

    Used by the container header so a decode against the wrong context
    fails fast instead of producing garbage.
    """
    buf = bytearray()
    for t in tokens:
        buf += int(t).to_bytes(4, "big")
    return fnv1a64(bytes(buf))


class TokenDistribution:
    """Validated probability vector + CDF over a finite token alphabet.

    Internally: cumulative integer weights ``cum`` with total ``cum[-1]``.
    The fixed-point CDF boundary for token ``k`` is
    ``cdf_unit(k) = cum[k] * ONE // total`` -- exact, strictly increasing
    (every weight is >= 1), and ``cdf_unit(V-1) == ONE`` exactly.
    """

    __slots__ = ("_cum", "_total", "_n")

    def __init__(self, cum, total: int, _validated: bool = False):
        self._cum = cum
        self._total = int(total)
        self._n = len(cum)
        if not _validated:
            if self._n == 0:
                raise EmptyVectorError("distribution over empty alphabet")
            if int(cum[0]) < 1:
                raise ValueError("weights must be >= 1")
            if isinstance(cum, np.ndarray):
                if not (np.diff(cum) >= 1).all():
                    raise ValueError("weights must be >= 1")
            else:
                prev = 0
                for c in cum:
                    if c - prev < 1:
                        raise ValueError("weights must be >= 1")
                    prev = c
            if int(cum[-1]) != self._total:
                raise ValueError("total does not match cumulative weights")

    @classmethod
    def from_weights(cls, weights, validate: bool = True) -> "TokenDistribution":
        """Build from positive integer weights (exact; no float rounding)."""
        if isinstance(weights, np.ndarray):
            cum = np.cumsum(weights, dtype=np.int64)
            return cls(cum, int(cum[-1]), _validated=not validate)
        weights = list(weights)
        if not weights:
            raise EmptyVectorError("empty weight vector")
        cum = []
        running = 0
        for w in weights:
            w = int(w)
            if validate and w < 1:
                raise ValueError("weights must be >= 1")
            running += w
            cum.append(running)
        return cls(cum, running, _validated=True)

    @classmethod
    def from_probs(cls, probs: Sequence[float], p_floor: float = DEFAULT_P_FLOOR) -> "TokenDistribution":
        return normalize_distribution(probs, p_floor)

    @property
    def vocab_size(self) -> int:
        return self._n

    @property
    def total_weight(self) -> int:
        return self._total

    def weight(self, token: int) -> int:
        lo = int(self._cum[token - 1]) if token > 0 else 0
        return int(self._cum[token]) - lo

    def prob(self, token: int) -> float:
        return self.weight(token) / self._total

    @property
    def probs(self) -> np.ndarray:
        cum = np.asarray(self._cum, dtype=np.float64)
        out = np.empty(self._n)
        out[0] = cum[0]
        out[1:] = np.diff(cum)
        return out / float(self._total)

    @property
    def cdf(self) -> np.ndarray:
        return np.asarray(self._cum, dtype=np.float64) / float(self._total)

    def cdf_unit(self, token: int) -> int:
        """Fixed-point CDF boundary for ``token`` (cdf_unit(-1) == 0)."""
        if token < 0:
            return 0
        if token >= self._n - 1:
            return ONE
        return (int(self._cum[token]) << FRACTION_BITS) // self._total

    def surprisal_bits(self, token: int) -> float:
        return -float(np.log2(self.prob(token)))

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        return f"TokenDistribution(vocab={self._n}, total_weight={self._total})"


def normalize_distribution(raw: Sequence[float], p_floor: float = DEFAULT_P_FLOOR) -> TokenDistribution:
    """Floor, renormalize, and quantize a raw non-negative vector.

    Entries below ``p_floor`` are pinned at exactly ``p_floor`` and the
    remaining entries are scaled down to absorb the difference, repeating
    until stable (the scaling can push new entries under the floor).
    Deterministic: pure vectorized arithmetic, no data-dependent
    iteration order.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise EmptyVectorError("raw probability vector is empty")
    if (arr < 0).any() or not np.isfinite(arr).all():
        raise ValueError("raw probabilities must be finite and non-negative")
    total = arr.sum()
    if total <= 0.0:
        raise AllZeroError("raw probability vector has no positive mass")
    n = arr.size
    if not (0.0 < p_floor < 1.0 / n):
        raise ValueError(f"p_floor must be in (0, 1/{n})")

    probs = arr / total
    pinned = np.zeros(n, dtype=bool)
    for _ in range(n):
        under = (probs < p_floor) & ~pinned
        if not under.any():
            break
        pinned |= under
        free = ~pinned
        free_mass = 1.0 - p_floor * pinned.sum()
        probs[pinned] = p_floor
        probs[free] *= free_mass / probs[free].sum()

    weights = np.maximum((probs * _FLOAT_WEIGHT_SCALE).astype(np.int64), 1)
    return TokenDistribution.from_weights(weights, validate=False)


@dataclass(frozen=True)
class Interval:
    """Half-open subinterval of [0, 1) on the fixed-point grid."""

    low_units: int
    high_units: int

    def __post_init__(self):
        if not (0 <= self.low_units < self.high_units <= ONE):
            raise ValueError("interval requires 0 <= low < high <= 1")

    @classmethod
    def unit(cls) -> "Interval":
        return cls(0, ONE)

    @property
    def low(self) -> float:
        return self.low_units / ONE

    @property
    def high(self) -> float:
        return self.high_units / ONE

    @property
    def width_units(self) -> int:
        return self.high_units - self.low_units

    @property
    def width(self) -> float:
        return self.width_units / ONE

    def midpoint_quantized(self, bits: int) -> int:
        """floor(((low + high) / 2) * (2**bits - 1)), computed exactly."""
        return ((self.low_units + self.high_units) * ((1 << bits) - 1)) >> (FRACTION_BITS + 1)

    def contains_units(self, v: int) -> bool:
        return self.low_units <= v < self.high_units


def refine_interval(iv: Interval, dist: TokenDistribution, token: int) -> Interval:
    """Narrow ``iv`` to the CDF cell of ``token``.

    Both bounds are computed from the original ``iv.low_units`` with
    truncating fixed-point products, so repeated refinement is exactly
    reproducible.  The new width is ``iv.width * dist.prob(token)`` up to
    one grid unit of truncation.
    """
    if not (0 <= token < dist.vocab_size):
        raise ValueError(f"token {token} outside alphabet of size {dist.vocab_size}")
    rng = iv.width_units
    new_low = iv.low_units + ((rng * dist.cdf_unit(token - 1)) >> FRACTION_BITS)
    new_high = iv.low_units + ((rng * dist.cdf_unit(token)) >> FRACTION_BITS)
    if new_low >= new_high:
        raise ValueError("interval width underflow: token probability too small for current width")
    return Interval(new_low, new_high)


TargetLike = Union[float, Fraction, int]


def locate_token(target: TargetLike, dist: TokenDistribution) -> int:
    """Return ``min{k : cdf[k] > target}`` for a target in [0, 1).

    The comparison is exact: the target is reduced to grid units and
    compared against the integer CDF boundaries, so results match the
    encoder's truncated arithmetic for any target at least one grid unit
    (2**-128) inside a cell.
    """
    if isinstance(target, int):
        units = target
    elif isinstance(target, Fraction):
        units = (target.numerator << FRACTION_BITS) // target.denominator
    else:
        frac = Fraction(target)
        units = (frac.numerator << FRACTION_BITS) // frac.denominator
    if not (0 <= units < ONE):
        raise ValueError("target must lie in [0, 1)")
    lo, hi = 0, dist.vocab_size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if dist.cdf_unit(mid) > units:
            hi = mid
        else:
            lo = mid + 1
    return lo


class ProbabilityModel(Protocol):
    """What a coder needs from a probability model handle.

    The determinism contract: the same (model, context) always yields an
    identical TokenDistribution.  A handle is confined to one stream at a
    time; its state advances only through :meth:`add_token`.
    """

    @property
    def vocab_size(self) -> int: ...

    @property
    def model_id(self) -> str: ...

    @property
    def context_hash(self) -> int: ...

    def next_distribution(self) -> TokenDistribution: ...

    def add_token(self, token: int) -> None: ...
