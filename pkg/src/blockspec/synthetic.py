"""Bundled synthetic corpus: a peaked bigram process over park and mover tokens.

Content tokens 1..V-1 follow a Markov chain where "mover" tokens hand
off to their cyclic successor and "park" tokens mostly repeat.  The
last content token usually emits the EOT id V and ends the sequence.
Greedy decoding of the trained bigram model therefore walks a short
transient of movers and then sits in a park run (or terminates); draft
acceptance concentrates in the runs while transients exercise the
rejection path.  Everything is driven by a seeded generator, so the
corpus, prompts, and anything calibrated from them are reproducible
byte for byte.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

DEFAULT_VOCAB = 12
DEFAULT_SEED = 7


def eot_id(vocab_size: int = DEFAULT_VOCAB) -> int:
    return vocab_size


def park_tokens(vocab_size: int = DEFAULT_VOCAB) -> Tuple[int, ...]:
    content = vocab_size - 1
    return (max(2, content // 4), min(content - 1, (3 * content) // 4))


def _next_state(
    state: int,
    vocab_size: int,
    rng: np.random.Generator,
    *,
    p_major: float = 0.8,
    p_minor: float = 0.1,
    p_end: float = 0.8,
) -> Optional[int]:
    """Next content token, or None when the chain ends the sequence."""
    content = vocab_size - 1
    if state == content and rng.random() < p_end:
        return None
    successor = state % content + 1
    if state in park_tokens(vocab_size):
        stay, move = p_major, p_minor
    else:
        stay, move = p_minor, p_major
    u = rng.random()
    if u < stay:
        return state
    if u < stay + move:
        return successor
    others = [t for t in range(1, content + 1) if t not in (state, successor)]
    return others[rng.integers(len(others))]


def make_corpus(
    seed: int = DEFAULT_SEED,
    *,
    total_tokens: int = 12000,
    vocab_size: int = DEFAULT_VOCAB,
    max_seq_len: int = 150,
) -> List[Tuple[int, ...]]:
    """Sequences totalling at least ``total_tokens`` ids, each EOT-terminated."""
    assert vocab_size >= 8
    content = vocab_size - 1
    rng = np.random.default_rng(seed)
    sequences: List[Tuple[int, ...]] = []
    emitted = 0
    while emitted < total_tokens:
        state: Optional[int] = int(rng.integers(1, content + 1))
        seq: List[int] = []
        while state is not None and len(seq) < max_seq_len - 1:
            seq.append(state)
            state = _next_state(state, vocab_size, rng)
        seq.append(eot_id(vocab_size))
        sequences.append(tuple(seq))
        emitted += len(seq)
    return sequences


def make_prompts(
    seed: int,
    count: int,
    *,
    length: int = 3,
    vocab_size: int = DEFAULT_VOCAB,
) -> List[Tuple[int, ...]]:
    """Short prompt sequences drawn from the same chain (no EOT)."""
    assert count >= 1 and length >= 1
    content = vocab_size - 1
    rng = np.random.default_rng(seed)
    prompts = []
    for _ in range(count):
        state = int(rng.integers(1, content + 1))
        seq = [state]
        while len(seq) < length:
            nxt = _next_state(state, vocab_size, rng)
            if nxt is None:
                nxt = int(rng.integers(1, content + 1))
            state = nxt
            seq.append(state)
        prompts.append(tuple(seq))
    return prompts
