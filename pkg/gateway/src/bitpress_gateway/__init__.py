"""bitpress-gateway: deterministic next-token distribution service."""

from .model import LanguageModelBackend
from .quantize import SCALE, SCALE_BITS, quantize_top_k, spread_remainder
from .service import create_app
from .sessions import SessionStore

__version__ = "0.1.0"

__all__ = [
    "LanguageModelBackend",
    "SCALE",
    "SCALE_BITS",
    "quantize_top_k",
    "spread_remainder",
    "create_app",
    "SessionStore",
]
