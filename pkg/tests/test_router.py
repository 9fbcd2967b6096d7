import numpy as np
import pytest

from bitpress.blockcoder import CoderConfig, encode
from bitpress.models import UniformModel, byte_tokens, train_ngram
from bitpress.router import (
    EMBED_DIM,
    ModelRegistry,
    RouteIndex,
    UnknownModelIdError,
    build_index,
    cosine,
    embed,
    evaluate_routing,
    route,
    routed_compress,
    routed_decompress,
)

from conftest import domain_a_documents, domain_b_documents


def make_registry(vocab=256):
    return ModelRegistry("base", UniformModel(vocab))


class TestEmbed:
    def test_empty_is_zero_vector(self):
        assert not embed("").any()

    def test_deterministic(self):
        assert (embed("some text") == embed("some text")).all()

    def test_unit_norm(self):
        assert np.linalg.norm(embed("hello world")) == pytest.approx(1.0)

    def test_trigram_overlap_orders_similarity(self):
        near = cosine(embed("aaaa" * 5), embed("aaab" * 5))
        far = cosine(embed("aaaa" * 5), embed("zzzz" * 5))
        assert near > far

    def test_short_text_still_embeds(self):
        assert np.linalg.norm(embed("ab")) == pytest.approx(1.0)


class TestIndex:
    def test_single_sample(self):
        reg = make_registry()
        reg.add("m_a", UniformModel(256))
        index = build_index([("doc", "m_a")], reg)
        assert len(index) == 1

    def test_duplicates_retained(self):
        reg = make_registry()
        reg.add("m_a", UniformModel(256))
        index = build_index([("doc", "m_a"), ("doc", "m_a")], reg)
        assert len(index) == 2

    def test_unknown_id_rejected(self):
        with pytest.raises(UnknownModelIdError):
            build_index([("doc", "ghost")], make_registry())

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_index([], make_registry())

    def test_save_load(self, tmp_path):
        reg = make_registry()
        reg.add("m_a", UniformModel(256))
        index = build_index([("alpha beta", "m_a"), ("gamma delta", "m_a")], reg, k=3)
        path = tmp_path / "index.json"
        index.save(path)
        loaded = RouteIndex.load(path)
        assert loaded.k == 3
        assert loaded.model_ids == index.model_ids
        assert np.allclose(loaded.vectors, index.vectors, atol=1e-9)


class TestRoute:
    def test_single_entry_index(self):
        reg = make_registry()
        reg.add("m_a", UniformModel(256))
        index = build_index([("anything", "m_a")], reg, k=5)
        assert route("whatever text", index, reg) == "m_a"

    def test_tie_breaks_lexicographically(self):
        reg = make_registry()
        reg.add("m_b", UniformModel(256))
        reg.add("m_a", UniformModel(256))
        index = build_index([("same doc", "m_b"), ("same doc", "m_a")], reg, k=2)
        assert route("same doc", index, reg) == "m_a"

    def test_empty_text_routes_to_base(self):
        reg = make_registry()
        reg.add("m_a", UniformModel(256))
        index = build_index([("doc", "m_a")], reg)
        assert route("", index, reg) == "base"

    def test_pure_function_of_inputs(self):
        reg = make_registry()
        reg.add("m_a", UniformModel(256))
        reg.add("m_b", UniformModel(256))
        samples = [("alpha bravo charlie", "m_a"), ("xray yankee zulu", "m_b")]
        index1 = build_index(samples, reg)
        index2 = build_index(samples, reg)
        for text in ("alpha charlie", "zulu zulu", "bravo yankee"):
            assert route(text, index1, reg) == route(text, index2, reg)


@pytest.fixture(scope="module")
def setup(domain_corpora):
    train_a, test_a, train_b, test_b = domain_corpora
    reg = make_registry()
    reg.add("domain_a", train_ngram("\n".join(train_a), order=2))
    reg.add("domain_b", train_ngram("\n".join(train_b), order=2))
    samples = [(doc, "domain_a") for doc in train_a] + \
              [(doc, "domain_b") for doc in train_b]
    index = build_index(samples, reg, k=10)
    labeled = [(doc, "domain_a") for doc in test_a] + \
              [(doc, "domain_b") for doc in test_b]
    return reg, index, labeled


class TestSyntheticDomains:

    def test_held_out_routing_accuracy(self, setup):
        reg, index, labeled = setup
        result = evaluate_routing(labeled, index, reg)
        assert result.accuracy >= 0.95

    def test_adversarial_labels_score_zero(self, setup):
        reg, index, labeled = setup
        swapped = [(text, "domain_b" if mid == "domain_a" else "domain_a")
                   for text, mid in labeled]
        result = evaluate_routing(swapped, index, reg)
        assert result.accuracy <= 0.05

    def test_single_domain_accuracy_one(self, setup):
        reg, index, labeled = setup
        only_a = [(t, m) for t, m in labeled if m == "domain_a"]
        correct, total = evaluate_routing(only_a, index, reg).per_domain["domain_a"]
        assert correct / total >= 0.95

    def test_prompt_only_no_better_than_full(self, setup):
        reg, index, labeled = setup
        # Prompt region: a domain-neutral preamble, so truncation strips
        # the evidence.
        neutral = [("question: please respond. " + text, mid)
                   for text, mid in labeled]
        prompt_lens = [len("question: please respond. ")] * len(neutral)
        full = evaluate_routing(neutral, index, reg, mode="full")
        prompt_only = evaluate_routing(neutral, index, reg, mode="prompt_only",
                                       prompt_lens=prompt_lens)
        assert prompt_only.accuracy <= full.accuracy

    def test_routed_round_trip(self, setup):
        reg, index, _ = setup
        text = "bade figo lumi pera " * 4
        stream = routed_compress(text, index, reg)
        assert stream.header.model_id in ("domain_a", "domain_b")
        assert routed_decompress(stream, reg) == text

    def test_in_domain_beats_base_in_aggregate(self, setup, domain_corpora):
        reg, index, _ = setup
        _, test_a, _, _ = domain_corpora
        routed_bits = 0
        base_bits = 0
        for doc in test_a[:20]:
            routed_bits += routed_compress(doc, index, reg).payload_bits
            base = encode(byte_tokens(doc), reg.fresh_handle("base"), CoderConfig(),
                          stream_model_id="base")
            base_bits += base.payload_bits
        assert routed_bits < base_bits

    def test_empty_text_header_only_base_stream(self, setup):
        reg, index, _ = setup
        stream = routed_compress("", index, reg)
        assert stream.header.model_id == "base"
        assert stream.blocks == []
        assert routed_decompress(stream, reg) == ""
