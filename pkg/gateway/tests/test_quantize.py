import numpy as np
import pytest

from bitpress_gateway.quantize import SCALE, quantize_top_k, spread_remainder


def softmaxish(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    e = np.exp(x - x.max())
    return e / e.sum()


class TestQuantizeTopK:
    @pytest.mark.parametrize("vocab,k,seed", [(256, 256, 1), (256, 64, 2),
                                              (256, 1, 3), (1000, 512, 4),
                                              (4, 4, 5), (4, 2, 6)])
    def test_mass_invariants(self, vocab, k, seed):
        pairs, remainder = quantize_top_k(softmaxish(vocab, seed), k)
        total = sum(m for _, m in pairs)
        assert total + remainder == SCALE
        assert all(m >= 1 for _, m in pairs)
        assert len(pairs) == min(k, vocab)
        unsent = vocab - len(pairs)
        if unsent:
            assert remainder >= unsent
        else:
            assert remainder == 0

    def test_deterministic(self):
        probs = softmaxish(256, 9)
        assert quantize_top_k(probs, 64) == quantize_top_k(probs.copy(), 64)

    def test_top_k_selects_largest(self):
        probs = np.array([0.1, 0.6, 0.05, 0.25])
        pairs, _ = quantize_top_k(probs, 2)
        assert [t for t, _ in pairs] == [1, 3]

    def test_tie_prefers_lowest_token_id(self):
        probs = np.array([0.25, 0.25, 0.25, 0.25])
        pairs, _ = quantize_top_k(probs, 2)
        assert [t for t, _ in pairs] == [0, 1]

    def test_full_vocab_leftover_goes_to_largest(self):
        # floor() loses mass; with k == vocab it must land back on the
        # largest entry so the total is exact.
        probs = np.array([0.5, 0.3, 0.2])
        pairs, remainder = quantize_top_k(probs, 3)
        assert remainder == 0
        masses = dict(pairs)
        assert masses[0] > int(0.5 * SCALE) - 2  # absorbed the leftover


class TestSpreadRemainder:
    def test_round_trip_with_quantizer(self):
        probs = softmaxish(256, 11)
        pairs, remainder = quantize_top_k(probs, 64)
        weights = spread_remainder(pairs, remainder, 256)
        assert sum(weights) == SCALE
        assert min(weights) >= 1

    def test_leftover_units_to_lowest_ids(self):
        pairs = [(2, SCALE - 7)]
        weights = spread_remainder(pairs, 7, 4)
        # three unsent (0, 1, 3): base 2, one extra unit to ids 0.
        assert weights == [3, 2, SCALE - 7, 2]

    def test_rejects_uncoverable_remainder(self):
        with pytest.raises(ValueError):
            spread_remainder([(0, SCALE - 1)], 1, 4)
