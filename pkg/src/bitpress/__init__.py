"""bitpress: model-driven text compression toolkit."""

from .core import (
    DEFAULT_P_FLOOR,
    FRACTION_BITS,
    ONE,
    Interval,
    TokenDistribution,
    locate_token,
    normalize_distribution,
    refine_interval,
)
from .blockcoder import (
    Block,
    BlockStream,
    CoderConfig,
    compressed_size_bits,
    decode,
    encode,
    pack,
    unpack,
)
from .models import (
    AdaptiveContextModel,
    PerturbedModel,
    StaticNGramModel,
    UniformModel,
    byte_tokens,
    perturb,
    tokens_to_bytes,
    train_ngram,
)
from .metrics import RatioReport, cross_entropy_bits, ratio_report

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_P_FLOOR",
    "FRACTION_BITS",
    "ONE",
    "Interval",
    "TokenDistribution",
    "locate_token",
    "normalize_distribution",
    "refine_interval",
    "Block",
    "BlockStream",
    "CoderConfig",
    "compressed_size_bits",
    "decode",
    "encode",
    "pack",
    "unpack",
    "AdaptiveContextModel",
    "PerturbedModel",
    "StaticNGramModel",
    "UniformModel",
    "byte_tokens",
    "perturb",
    "tokens_to_bytes",
    "train_ngram",
    "RatioReport",
    "cross_entropy_bits",
    "ratio_report",
]
