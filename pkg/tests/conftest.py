"""Shared fixtures: synthetic domain corpora and small scripted oracles."""

from __future__ import annotations

import random
from typing import List, Tuple

import pytest

# Domain texts mix a shared core vocabulary (the common carrier language
# both domains are written in) with domain-specific words built from
# distinct syllable pairings.  Distinct trigram profiles keep the domains
# routable and mutually out-of-distribution at the document level, while
# the shared core means a model trained on the wrong domain still beats
# a uniform coder -- the behavior of topic-specialized models over one
# underlying language.
SYLLABLES_A = ["ba", "de", "fi", "go", "lu", "mi", "no", "pe", "ra", "su", "ti", "vo"]
SYLLABLES_B = ["bo", "da", "fe", "gi", "lo", "mu", "ni", "pa", "re", "si", "tu", "va"]
SYLLABLES_SHARED = ["ka", "we", "hi", "jo", "zu", "ce", "qa", "xi"]

SHARED_WORD_FRACTION = 0.45
LEXICON_SEED_A = 1001
LEXICON_SEED_B = 2002
LEXICON_SEED_SHARED = 3003


def make_lexicon(syllables: List[str], n_words: int, seed: int) -> List[str]:
    rng = random.Random(seed)
    words = []
    for _ in range(n_words):
        words.append("".join(rng.choice(syllables) for _ in range(rng.randint(2, 4))))
    return words


def make_documents(syllables: List[str], n_docs: int, seed: int,
                   lexicon_seed: int,
                   words_per_doc: Tuple[int, int] = (10, 18)) -> List[str]:
    # lexicon_seed is per domain: train and held-out docs of one domain
    # must draw from the same word stock.
    rng = random.Random(seed)
    domain_words = make_lexicon(syllables, 40, lexicon_seed)
    shared_words = make_lexicon(SYLLABLES_SHARED, 30, LEXICON_SEED_SHARED)
    docs = []
    for _ in range(n_docs):
        n_words = rng.randint(*words_per_doc)
        words = []
        for _ in range(n_words):
            if rng.random() < SHARED_WORD_FRACTION:
                words.append(rng.choice(shared_words))
            else:
                words.append(rng.choice(domain_words))
        docs.append(" ".join(words) + ".")
    return docs


def domain_a_documents(n_docs: int, seed: int) -> List[str]:
    return make_documents(SYLLABLES_A, n_docs, seed, LEXICON_SEED_A)


def domain_b_documents(n_docs: int, seed: int) -> List[str]:
    return make_documents(SYLLABLES_B, n_docs, seed, LEXICON_SEED_B)


@pytest.fixture(scope="session")
def domain_corpora():
    """(train_a, test_a, train_b, test_b) document lists, small scale."""
    train_a = domain_a_documents(200, seed=11)
    test_a = domain_a_documents(50, seed=12)
    train_b = domain_b_documents(200, seed=21)
    test_b = domain_b_documents(50, seed=22)
    return train_a, test_a, train_b, test_b
