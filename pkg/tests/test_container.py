"""Byte-level container format tests against hand-built golden fixtures.

The .bpc1 files under tests/golden/ were written by an independent
struct-based constructor (see fixtures.json for the field values), not
by pack(), so these tests cross-check both directions of the codec.
"""

import json
import random
from pathlib import Path

import pytest

from bitpress.blockcoder import (
    BadMagicError,
    Block,
    BlockStream,
    ContainerError,
    ContextHashMismatchError,
    CoderConfig,
    CountOverrunError,
    HeaderMismatchError,
    StreamHeader,
    TruncatedStreamError,
    UnsupportedVersionError,
    decode,
    encode,
    pack,
    unpack,
)
from bitpress.models import UniformModel

GOLDEN = Path(__file__).parent / "golden"


def load_fixtures():
    with open(GOLDEN / "fixtures.json") as fh:
        return json.load(fh)


@pytest.mark.parametrize("fx", load_fixtures(), ids=lambda fx: fx["name"])
class TestGolden:
    def test_unpack_fields(self, fx):
        raw = (GOLDEN / f"{fx['name']}.bpc1").read_bytes()
        stream = unpack(raw)
        assert stream.header.B == fx["B"]
        assert stream.header.b == fx["b"]
        assert stream.header.vocab_size == fx["vocab"]
        assert stream.header.model_id == fx["model_id"]
        assert stream.header.context_hash == fx["ctx_hash"]
        assert [[blk.midpoint, blk.count] for blk in stream.blocks] == fx["blocks"]

    def test_repack_byte_identical(self, fx):
        raw = (GOLDEN / f"{fx['name']}.bpc1").read_bytes()
        assert pack(unpack(raw)) == raw

    def test_every_header_byte_flip_detected(self, fx):
        # Header bytes cover magic..block count; a flip must surface as a
        # container error at unpack or a mismatch at decode time.
        raw = bytearray((GOLDEN / f"{fx['name']}.bpc1").read_bytes())
        header_len = 25 + len(fx["model_id"].encode())
        model = UniformModel(fx["vocab"])
        cfg = CoderConfig(B=fx["B"], b=fx["b"])
        for i in range(header_len):
            corrupted = bytearray(raw)
            corrupted[i] ^= 0x01
            with pytest.raises((ContainerError, HeaderMismatchError,
                                ContextHashMismatchError, CountOverrunError)):
                stream = unpack(bytes(corrupted))
                decode(stream, model, cfg,
                       stream_model_id=fx["model_id"])


class TestPackArithmetic:
    def test_empty_stream_header_bytes_only(self):
        stream = encode([], UniformModel(2), CoderConfig())
        raw = pack(stream)
        assert len(raw) == stream.header.packed_size()

    def test_one_block_payload_is_eight_bytes(self):
        # 58 + 5 = 63 payload bits -> 8 payload bytes.
        stream = encode([0], UniformModel(2), CoderConfig())
        raw = pack(stream)
        assert len(raw) - stream.header.packed_size() == 8

    def test_random_streams_round_trip(self):
        rng = random.Random(99)
        for _ in range(1000):
            B = rng.randint(8, 64)
            b = rng.randint(1, 16)
            n_blocks = rng.randint(0, 20)
            header = StreamHeader(1, B, b, rng.randint(1, 1 << 20),
                                  "m" * rng.randint(0, 12), rng.getrandbits(64))
            blocks = [Block(rng.randrange(1 << B), rng.randint(1, (1 << b) - 1))
                      for _ in range(n_blocks)]
            stream = BlockStream(header, blocks)
            assert unpack(pack(stream)) == stream


class TestContainerErrors:
    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            unpack(b"NOPE" + bytes(40))

    def test_bad_version(self):
        raw = bytearray(pack(encode([], UniformModel(2), CoderConfig())))
        raw[4] = 9
        with pytest.raises(UnsupportedVersionError):
            unpack(bytes(raw))

    def test_truncated(self):
        raw = pack(encode([0, 1, 1], UniformModel(2), CoderConfig()))
        with pytest.raises(TruncatedStreamError):
            unpack(raw[:-1])
        with pytest.raises(TruncatedStreamError):
            unpack(raw[:3])

    def test_trailing_garbage(self):
        raw = pack(encode([0, 1, 1], UniformModel(2), CoderConfig()))
        with pytest.raises(TruncatedStreamError):
            unpack(raw + b"\x00")

    def test_nonzero_padding(self):
        raw = bytearray(pack(encode([0], UniformModel(2), CoderConfig())))
        raw[-1] ^= 0x01  # 63 payload bits: last bit of final byte is padding
        with pytest.raises(TruncatedStreamError):
            unpack(bytes(raw))

    def test_zero_count_block(self):
        header = StreamHeader(1, 58, 5, 2, "m", 0)
        raw = pack(BlockStream(header, [Block(5, 0)]))
        with pytest.raises(CountOverrunError):
            unpack(raw)
