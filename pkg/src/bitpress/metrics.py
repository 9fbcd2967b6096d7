"""Compression and entropy accounting shared across the toolkit.

Two ratio conventions, per the container's byte/token duality: the byte
ratio divides payload bits by 8 * byte length, the token ratio divides
by tokens * log2(vocab) -- the cost of spelling the tokens out uniformly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence, TextIO, Union

from .blockcoder import BlockStream
from .core import ProbabilityModel


class ZeroLengthTextError(ValueError):
    pass


@dataclass(frozen=True)
class RatioReport:
    payload_bits: int
    input_bits_bytes: float
    input_bits_tokens: float
    ratio_bytes: float
    ratio_tokens: float
    bits_per_char: float
    bits_per_token: float
    char_count: int
    token_count: int
    vocab_size: int

    def rounded(self, places: int = 4) -> dict:
        """Presentation form: ratios rounded the way result tables print them."""
        d = asdict(self)
        for key in ("ratio_bytes", "ratio_tokens", "bits_per_char", "bits_per_token"):
            d[key] = round(d[key], places)
        return d


def cross_entropy_bits(tokens: Sequence[int], model: ProbabilityModel) -> float:
    """Sum of per-token surprisals under the model's sequential predictions.

    Advances the handle's state; pass a freshly primed handle.
    """
    total = 0.0
    for t in tokens:
        dist = model.next_distribution()
        total += -math.log2(dist.prob(t))
        model.add_token(t)
    return total


def ratio_report(text: Union[str, bytes], stream: BlockStream,
                 tokenizer_vocab: Optional[int] = None) -> RatioReport:
    """All the ratio metrics for one (text, encoded stream) pair."""
    if isinstance(text, str):
        char_count = len(text)
        byte_count = len(text.encode("utf-8"))
    else:
        char_count = len(text)
        byte_count = len(text)
    if char_count == 0:
        raise ZeroLengthTextError("cannot report ratios for empty text")
    vocab = tokenizer_vocab if tokenizer_vocab is not None else stream.header.vocab_size
    if vocab < 2:
        raise ValueError("vocab must be >= 2")

    payload = stream.payload_bits
    tokens = stream.token_count
    input_bits_bytes = 8.0 * byte_count
    input_bits_tokens = tokens * math.log2(vocab)
    return RatioReport(
        payload_bits=payload,
        input_bits_bytes=input_bits_bytes,
        input_bits_tokens=input_bits_tokens,
        ratio_bytes=payload / input_bits_bytes,
        ratio_tokens=payload / input_bits_tokens if tokens else 0.0,
        bits_per_char=payload / char_count,
        bits_per_token=payload / tokens if tokens else 0.0,
        char_count=char_count,
        token_count=tokens,
        vocab_size=vocab,
    )


def write_reports_csv(reports: Iterable[RatioReport], out: TextIO) -> None:
    rows = [r.rounded() for r in reports]
    if not rows:
        return
    writer = csv.DictWriter(out, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)


def reports_json(reports: Iterable[RatioReport]) -> str:
    return json.dumps([r.rounded() for r in reports], indent=2)
