"""Shared fixtures: the bundled synthetic corpus and a model trained on it."""

import pytest

from blockspec import synthetic
from blockspec.core import GenerationConfig, UnmaskSchedule
from blockspec.model import train_from_corpus


@pytest.fixture(scope="session")
def corpus():
    return synthetic.make_corpus(synthetic.DEFAULT_SEED)


@pytest.fixture(scope="session")
def vocab_size(corpus):
    return max(t for seq in corpus for t in seq)


@pytest.fixture(scope="session")
def model(corpus, vocab_size):
    return train_from_corpus(corpus, vocab_size)


@pytest.fixture(scope="session")
def prompts():
    return synthetic.make_prompts(11, 20)


def make_config(schedule="fixed:1", total_length=32, block_length=8, vocab_size=12, **kw):
    """Config helper: schedule given as its parse string."""
    return GenerationConfig(
        total_length=total_length,
        block_length=block_length,
        schedule=UnmaskSchedule.parse(schedule),
        top_k_vocab=kw.pop("top_k_vocab", 3),
        eot_token=kw.pop("eot_token", vocab_size),
        seed=kw.pop("seed", 0),
    )
