"""Block-emission arithmetic encoder/decoder and its container format.

Standard arithmetic coding keeps one interval alive for the whole
message, so any probability mismatch between encoder and decoder
snowballs.  Here the encoder instead emits the current interval's
quantized midpoint whenever the next refinement would shrink the width
below a threshold (or the per-block token budget fills up), then
restarts from a fresh unit interval.  Each emitted block is therefore
independently decodable given the model state, which caps how far a
mismatch can smear.

Encode/decode walk bit-identical integer interval trajectories (see
``core``): the decoder never divides a midpoint back into a "target"
float, it compares the exact dequantized point against the same
truncated cell boundaries the encoder produced.

Container layout (big-endian, MSB-first bit packing)::

    magic 'BPC1' | u8 version | u8 B | u8 b | u32 vocab_size
    | u16 len + model_id utf-8 | u64 context_hash | u32 block_count
    | block_count x (B-bit midpoint, b-bit count), zero-padded to a byte
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .core import FRACTION_BITS, ONE, ProbabilityModel

MAGIC = b"BPC1"
FORMAT_VERSION = 1

DEFAULT_B = 58
DEFAULT_COUNT_BITS = 5
DEFAULT_EPSILON = 2.0 ** -50


class CoderError(Exception):
    """Base class for coder and container failures."""


class TokenOutOfAlphabetError(CoderError):
    pass


class HeaderMismatchError(CoderError):
    """Stream header disagrees with the supplied config or model."""


class ContextHashMismatchError(CoderError):
    """Decoder model was primed with a different context than the encoder."""


class CountOverrunError(CoderError):
    """A block declares a token count outside [1, 2**b)."""


class ContainerError(CoderError):
    """Base class for byte-level container failures."""


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class TruncatedStreamError(ContainerError):
    """Byte length does not match the declared structure."""


@dataclass(frozen=True)
class CoderConfig:
    """Knobs of the block coder.

    B:        midpoint precision in bits.
    b:        per-block token-count field width; a block holds at most
              2**b - 1 tokens.
    epsilon:  emission threshold; a refinement that would leave the
              interval narrower than this triggers a block emission
              first.  Must leave the narrowest legal interval wider than
              a couple of midpoint quantization steps, otherwise the
              quantized midpoint could escape the interval (checked at
              emission time).
    """

    B: int = DEFAULT_B
    b: int = DEFAULT_COUNT_BITS
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not (8 <= self.B <= 64):
            raise ValueError("B must be in [8, 64]")
        if not (1 <= self.b <= 16):
            raise ValueError("b must be in [1, 16]")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")

    @property
    def max_block_tokens(self) -> int:
        return (1 << self.b) - 1

    @property
    def epsilon_units(self) -> int:
        return int(self.epsilon * ONE)


@dataclass(frozen=True)
class Block:
    """One emitted (midpoint, token count) pair."""

    midpoint: int
    count: int


@dataclass(frozen=True)
class StreamHeader:
    version: int
    B: int
    b: int
    vocab_size: int
    model_id: str
    context_hash: int

    def packed_size(self) -> int:
        return 4 + 1 + 1 + 1 + 4 + 2 + len(self.model_id.encode("utf-8")) + 8 + 4


@dataclass(frozen=True)
class BlockStream:
    """Header plus the ordered emitted blocks; bit-exact value object."""

    header: StreamHeader
    blocks: List[Block] = field(default_factory=list)

    @property
    def token_count(self) -> int:
        return sum(blk.count for blk in self.blocks)

    @property
    def header_bits(self) -> int:
        return 8 * self.header.packed_size()

    @property
    def payload_bits(self) -> int:
        return len(self.blocks) * (self.header.B + self.header.b)

    @property
    def total_bits(self) -> int:
        return self.header_bits + self.payload_bits


def compressed_size_bits(stream: BlockStream, include_header: bool = False) -> int:
    """|blocks| * (B + b), optionally plus the header bits."""
    bits = stream.payload_bits
    if include_header:
        bits += stream.header_bits
    return bits


def _check_emittable(low: int, high: int, quant_max: int) -> None:
    # The quantized midpoint moves left by < 1/quant_max; it must stay
    # strictly inside [low, high).  Requires width/2 > 1/quant_max.
    if (high - low) * quant_max <= 2 * ONE:
        raise CoderError(
            "interval too narrow for midpoint precision; "
            "raise B or epsilon (or the model's probability floor)")


def encode(tokens: Sequence[int], model: ProbabilityModel,
           config: CoderConfig = CoderConfig(), *,
           stream_model_id: Optional[str] = None) -> BlockStream:
    """Encode ``tokens`` under ``model`` into a block stream.

    The model's context advances by every token regardless of block
    boundaries.  The token that triggers an emission opens the new
    block: the emitted count describes the block just closed.  Empty
    input produces a header-only stream with no blocks.
    """
    quant_max = (1 << config.B) - 1
    eps_units = config.epsilon_units
    cap = config.max_block_tokens

    header = StreamHeader(
        version=FORMAT_VERSION,
        B=config.B,
        b=config.b,
        vocab_size=model.vocab_size,
        model_id=stream_model_id if stream_model_id is not None else model.model_id,
        context_hash=model.context_hash,
    )

    low, high = 0, ONE
    count = 0
    blocks: List[Block] = []

    for token in tokens:
        token = int(token)
        if not (0 <= token < model.vocab_size):
            raise TokenOutOfAlphabetError(
                f"token {token} outside alphabet of size {model.vocab_size}")
        dist = model.next_distribution()
        rng = high - low
        c_lo = dist.cdf_unit(token - 1)
        c_hi = dist.cdf_unit(token)
        new_low = low + ((rng * c_lo) >> FRACTION_BITS)
        new_high = low + ((rng * c_hi) >> FRACTION_BITS)

        if count > 0 and (new_high - new_low < eps_units or count >= cap):
            _check_emittable(low, high, quant_max)
            midpoint = ((low + high) * quant_max) >> (FRACTION_BITS + 1)
            blocks.append(Block(midpoint, count))
            # Fresh interval: the triggering token's cell in [0, 1).
            low, high = c_lo, c_hi
            count = 1
        else:
            low, high = new_low, new_high
            count += 1
        if low >= high:
            raise CoderError("interval underflow: token probability below grid resolution")
        model.add_token(token)

    if count > 0:
        _check_emittable(low, high, quant_max)
        midpoint = ((low + high) * quant_max) >> (FRACTION_BITS + 1)
        blocks.append(Block(midpoint, count))

    return BlockStream(header, blocks)


def decode(stream: BlockStream, model: ProbabilityModel,
           config: CoderConfig = CoderConfig(), *,
           stream_model_id: Optional[str] = None) -> List[int]:
    """Invert :func:`encode`.

    The model must be primed with the encoder's context (verified via
    the header's context hash) and the config must match the header.
    """
    hdr = stream.header
    if hdr.B != config.B or hdr.b != config.b:
        raise HeaderMismatchError(
            f"config (B={config.B}, b={config.b}) does not match "
            f"header (B={hdr.B}, b={hdr.b})")
    if hdr.vocab_size != model.vocab_size:
        raise HeaderMismatchError(
            f"model vocab {model.vocab_size} does not match header {hdr.vocab_size}")
    expected_id = stream_model_id if stream_model_id is not None else model.model_id
    if hdr.model_id != expected_id:
        raise HeaderMismatchError(
            f"stream encoded with model {hdr.model_id!r}, decoder has {expected_id!r}")
    if hdr.context_hash != model.context_hash:
        raise ContextHashMismatchError(
            "decoder model primed with a different context than the encoder")

    quant_max = (1 << config.B) - 1
    cap = config.max_block_tokens
    vocab = model.vocab_size
    out: List[int] = []

    for blk in stream.blocks:
        if not (1 <= blk.count <= cap):
            raise CountOverrunError(f"block count {blk.count} outside [1, {cap}]")
        if not (0 <= blk.midpoint <= quant_max):
            raise CoderError(f"midpoint {blk.midpoint} outside [0, 2**B)")
        # Exact comparisons of v = midpoint/(2**B - 1) against integer
        # grid boundaries are decided by floor(v * ONE); clamp the
        # all-ones midpoint inside the unit interval.
        v = (blk.midpoint * ONE) // quant_max
        if v >= ONE:
            v = ONE - 1
        low, high = 0, ONE
        for _ in range(blk.count):
            dist = model.next_distribution()
            rng = high - low
            # Find the cell [low + T(rng*cdf[k-1]), low + T(rng*cdf[k]))
            # holding v.  Cells tile [low, low + rng) exactly, so any
            # in-range v (including a corrupted midpoint) resolves.
            lo_k, hi_k = 0, vocab - 1
            while lo_k < hi_k:
                mid_k = (lo_k + hi_k) // 2
                if low + ((rng * dist.cdf_unit(mid_k)) >> FRACTION_BITS) > v:
                    hi_k = mid_k
                else:
                    lo_k = mid_k + 1
            token = lo_k
            new_low = low + ((rng * dist.cdf_unit(token - 1)) >> FRACTION_BITS)
            new_high = low + ((rng * dist.cdf_unit(token)) >> FRACTION_BITS)
            low, high = new_low, new_high
            if v < low:
                v = low  # only reachable with a corrupted midpoint
            elif v >= high:
                v = high - 1
            out.append(token)
            model.add_token(token)

    return out


class _BitWriter:
    """MSB-first bit packer."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, nbits: int) -> None:
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nbits += nbits
        while self._nbits >= 8:
            self._nbits -= 8
            self._bytes.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def getvalue(self) -> bytes:
        out = bytearray(self._bytes)
        if self._nbits:
            out.append((self._acc << (8 - self._nbits)) & 0xFF)
        return bytes(out)


class _BitReader:
    """MSB-first bit unpacker over a fixed buffer."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0  # bit position

    def read(self, nbits: int) -> int:
        end = self._pos + nbits
        if end > 8 * len(self._data):
            raise TruncatedStreamError("bit payload shorter than declared")
        value = 0
        pos = self._pos
        while nbits > 0:
            byte = self._data[pos >> 3]
            avail = 8 - (pos & 7)
            take = min(avail, nbits)
            shift = avail - take
            value = (value << take) | ((byte >> shift) & ((1 << take) - 1))
            pos += take
            nbits -= take
        self._pos = pos
        return value

    @property
    def bit_pos(self) -> int:
        return self._pos


def pack(stream: BlockStream) -> bytes:
    """Serialize to the BPC1 container; final partial byte zero-padded."""
    hdr = stream.header
    model_id = hdr.model_id.encode("utf-8")
    if len(model_id) > 0xFFFF:
        raise ValueError("model_id too long")
    out = bytearray()
    out += MAGIC
    out += struct.pack(">BBBI", hdr.version, hdr.B, hdr.b, hdr.vocab_size)
    out += struct.pack(">H", len(model_id))
    out += model_id
    out += struct.pack(">QI", hdr.context_hash, len(stream.blocks))
    writer = _BitWriter()
    for blk in stream.blocks:
        writer.write(blk.midpoint, hdr.B)
        writer.write(blk.count, hdr.b)
    out += writer.getvalue()
    return bytes(out)


def unpack(data: bytes) -> BlockStream:
    """Parse a BPC1 container; strict about lengths and padding bits."""
    if len(data) < 4:
        raise TruncatedStreamError("shorter than magic")
    if data[:4] != MAGIC:
        raise BadMagicError("bad magic; not a BPC1 container")
    try:
        version, B, b, vocab_size = struct.unpack_from(">BBBI", data, 4)
        (id_len,) = struct.unpack_from(">H", data, 11)
        model_id_bytes = data[13:13 + id_len]
        if len(model_id_bytes) != id_len:
            raise TruncatedStreamError("model_id truncated")
        off = 13 + id_len
        context_hash, n_blocks = struct.unpack_from(">QI", data, off)
        off += 12
    except struct.error as exc:
        raise TruncatedStreamError(f"header truncated: {exc}") from None
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    if not (8 <= B <= 64) or not (1 <= b <= 16):
        raise UnsupportedVersionError(f"header declares invalid precision B={B}, b={b}")
    try:
        model_id = model_id_bytes.decode("utf-8")
    except UnicodeDecodeError:
        raise UnsupportedVersionError("model_id is not valid UTF-8") from None

    payload_bits = n_blocks * (B + b)
    expect_len = off + (payload_bits + 7) // 8
    if len(data) < expect_len:
        raise TruncatedStreamError(
            f"container is {len(data)} bytes; structure declares {expect_len}")
    if len(data) > expect_len:
        raise TruncatedStreamError(
            f"{len(data) - expect_len} trailing bytes after declared payload")

    reader = _BitReader(data[off:])
    blocks: List[Block] = []
    for _ in range(n_blocks):
        midpoint = reader.read(B)
        count = reader.read(b)
        if count == 0:
            raise CountOverrunError("block with zero token count")
        blocks.append(Block(midpoint, count))
    pad_bits = (-payload_bits) % 8
    if pad_bits and reader.read(pad_bits) != 0:
        raise TruncatedStreamError("nonzero padding bits")

    header = StreamHeader(version, B, b, vocab_size, model_id, context_hash)
    return BlockStream(header, blocks)
