"""Deterministic fixed-point quantization of probability vectors.

Float probabilities never cross the wire: every distribution is reduced
to integer masses on a 32-bit scale before serialization, so any client
reconstructs exactly the same distribution regardless of its own float
behavior.  The transmitted form is the top-k (token, mass) pairs plus
the remainder mass; the client spreads the remainder uniformly over the
unsent tokens, which the invariants below make always possible:

  * sum(sent masses) + remainder == SCALE, exactly;
  * every sent mass >= 1;
  * k < vocab  =>  remainder >= vocab - k  (one unit per unsent token);
  * k == vocab =>  remainder == 0.

Ties during renormalization resolve to the lowest token id.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

SCALE_BITS = 32
SCALE = 1 << SCALE_BITS


def quantize_top_k(probs: np.ndarray, top_k: int) -> Tuple[List[Tuple[int, int]], int]:
    """Reduce a probability vector to ((token, mass) pairs, remainder).

    Deterministic: top-k selection orders by (-prob, token_id), mass
    adjustments always touch the largest mass first (lowest id on ties).
    """
    vocab = int(probs.shape[0])
    if vocab == 0:
        raise ValueError("empty probability vector")
    k = min(int(top_k), vocab)
    if k < 1:
        raise ValueError("top_k must be >= 1")

    order = np.lexsort((np.arange(vocab), -probs))
    chosen = np.sort(order[:k])  # canonical ascending-token order
    masses = {int(t): max(1, int(float(probs[t]) * SCALE)) for t in chosen}

    unsent = vocab - k
    floor_needed = 0 if unsent == 0 else unsent
    total = sum(masses.values())
    remainder = SCALE - total

    def largest_token() -> int:
        return min(masses, key=lambda t: (-masses[t], t))

    # Steal from the largest masses until the remainder can cover one
    # unit per unsent token (or exactly zero when the full vocab went).
    while remainder < floor_needed:
        t = largest_token()
        take = min(masses[t] - 1, floor_needed - remainder)
        if take <= 0:
            raise ValueError("cannot renormalize: scale too small for vocab")
        masses[t] -= take
        remainder += take
    if unsent == 0 and remainder > 0:
        t = largest_token()
        masses[t] += remainder
        remainder = 0

    pairs = [(t, masses[t]) for t in sorted(masses)]
    assert sum(m for _, m in pairs) + remainder == SCALE
    return pairs, remainder


def spread_remainder(pairs: List[Tuple[int, int]], remainder: int,
                     vocab: int) -> List[int]:
    """Client-side reconstruction: full integer weight vector.

    Unsent tokens share the remainder evenly; the leftover goes one unit
    each to the lowest unsent token ids.  The result always sums to
    SCALE with every weight >= 1.
    """
    weights = [0] * vocab
    for token, mass in pairs:
        if not (0 <= token < vocab):
            raise ValueError(f"token {token} outside vocab {vocab}")
        if mass < 1:
            raise ValueError("sent mass < 1")
        weights[token] = mass
    unsent = [t for t in range(vocab) if weights[t] == 0]
    if not unsent:
        if remainder != 0:
            raise ValueError("full-vocab response with nonzero remainder")
        return weights
    base, extra = divmod(remainder, len(unsent))
    if base < 1:
        raise ValueError("remainder cannot cover unsent tokens")
    for i, t in enumerate(unsent):
        weights[t] = base + (1 if i < extra else 0)
    if sum(weights) != SCALE:
        raise ValueError("reconstructed weights do not sum to scale")
    return weights
