"""Core value types for block-wise masked diffusion decoding.

Token ids are plain ints: MASK is 0, real tokens are 1..V.  A generation
run owns a prompt plus N blocks of L positions each, denoised strictly
left to right.  All types here are immutable values; nothing mutates in
place, so they are safe to share.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

MASK = 0


# ---------------------------------------------------------------------------
# block / sequence state


@dataclass(frozen=True)
class BlockState:
    """One block of L token slots, MASK for not-yet-denoised positions."""

    tokens: Tuple[int, ...]

    def __post_init__(self):
        assert len(self.tokens) > 0, "empty block"
        for t in self.tokens:
            assert t >= 0, "negative token id"

    @staticmethod
    def masked(length: int) -> "BlockState":
        return BlockState(tokens=(MASK,) * length)

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def masked_positions(self) -> Tuple[int, ...]:
        return tuple(n for n, t in enumerate(self.tokens) if t == MASK)

    @property
    def unmasked_count(self) -> int:
        return sum(1 for t in self.tokens if t != MASK)

    @property
    def is_complete(self) -> bool:
        return self.unmasked_count == self.length

    def with_token(self, position: int, token: int) -> "BlockState":
        assert self.tokens[position] == MASK, "position already unmasked"
        assert token != MASK, "cannot unmask to MASK"
        toks = list(self.tokens)
        toks[position] = token
        return BlockState(tokens=tuple(toks))


@dataclass(frozen=True)
class SequenceState:
    """Prompt plus N blocks; ``active`` is the block currently denoising.

    Blocks left of ``active`` must be complete, blocks right of it fully
    masked (strict left-to-right order).
    """

    prompt: Tuple[int, ...]
    blocks: Tuple[BlockState, ...]
    active: int

    @staticmethod
    def initial(prompt: Tuple[int, ...], num_blocks: int, block_length: int) -> "SequenceState":
        blocks = tuple(BlockState.masked(block_length) for _ in range(num_blocks))
        return SequenceState(prompt=tuple(prompt), blocks=blocks, active=0)

    @property
    def active_block(self) -> BlockState:
        return self.blocks[self.active]

    def with_active_block(self, block: BlockState) -> "SequenceState":
        assert block.length == self.blocks[self.active].length
        blocks = self.blocks[: self.active] + (block,) + self.blocks[self.active + 1 :]
        return replace(self, blocks=blocks)

    def advance_block(self) -> "SequenceState":
        assert self.active_block.is_complete, "active block not complete"
        assert self.active + 1 < len(self.blocks), "no next block"
        return replace(self, active=self.active + 1)

    def all_tokens(self) -> Tuple[int, ...]:
        out = list(self.prompt)
        for b in self.blocks:
            out.extend(b.tokens)
        return tuple(out)

    def generated_tokens(self) -> Tuple[int, ...]:
        out: List[int] = []
        for b in self.blocks:
            out.extend(b.tokens)
        return tuple(out)


def validate_sequence(state: SequenceState) -> List[str]:
    """Return a list of invariant violations (empty when the state is well formed)."""
    problems = []
    if not (0 <= state.active < len(state.blocks)):
        problems.append("active block index out of range")
        return problems
    for t in state.prompt:
        if t == MASK:
            problems.append("prompt contains MASK")
            break
    for i, b in enumerate(state.blocks):
        if i < state.active and not b.is_complete:
            problems.append("block %d left of active is incomplete" % i)
        if i > state.active and b.unmasked_count != 0:
            problems.append("block %d right of active is partially unmasked" % i)
    return problems


# ---------------------------------------------------------------------------
# marginals


@dataclass(frozen=True)
class Marginals:
    """Per-position next-step distributions for one block.

    ``rows`` has shape (L, V); column c holds the probability of token
    c + 1.  Rows for unmasked positions are one-hot on the committed
    token.  The array is frozen after construction.
    """

    rows: np.ndarray

    def __post_init__(self):
        assert self.rows.ndim == 2
        self.rows.setflags(write=False)

    @property
    def block_length(self) -> int:
        return self.rows.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[1]

    def prob(self, position: int, token: int) -> float:
        assert token != MASK
        return float(self.rows[position, token - 1])

    def top1_prob(self, position: int) -> float:
        return float(self.rows[position].max())

    def argmax_token(self, position: int) -> int:
        # ties broken toward the smaller token id (argmax returns first max)
        return int(np.argmax(self.rows[position])) + 1


def one_hot_marginals(block: BlockState, vocab_size: int) -> Marginals:
    """Degenerate marginals for a fully unmasked block: every row one-hot."""
    assert block.is_complete, "one_hot_marginals needs a complete block"
    rows = np.zeros((block.length, vocab_size), dtype=np.float64)
    for n, t in enumerate(block.tokens):
        rows[n, t - 1] = 1.0
    return Marginals(rows=rows)


# ---------------------------------------------------------------------------
# unmasking schedules


@dataclass(frozen=True)
class UnmaskSchedule:
    """How many tokens each denoising step commits.

    ``fixed`` unmasks exactly s tokens per step (fewer at block end);
    ``threshold`` unmasks every position whose top-1 probability clears
    p, and always at least one.  Realized per-step counts are logged in
    the run report, not here.
    """

    kind: str
    tokens_per_step: Optional[int] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind == "fixed":
            assert self.tokens_per_step is not None and self.tokens_per_step >= 1
            assert self.threshold is None
        elif self.kind == "threshold":
            assert self.threshold is not None and 0.0 < self.threshold <= 1.0
            assert self.tokens_per_step is None
        else:
            raise ValueError("unknown schedule kind: %r" % (self.kind,))

    @staticmethod
    def fixed(s: int) -> "UnmaskSchedule":
        return UnmaskSchedule(kind="fixed", tokens_per_step=s)

    @staticmethod
    def at_threshold(p: float) -> "UnmaskSchedule":
        return UnmaskSchedule(kind="threshold", threshold=p)

    @staticmethod
    def parse(text: str) -> "UnmaskSchedule":
        """Parse ``fixed:2`` / ``threshold:0.9`` style schedule strings."""
        parts = text.strip().split(":")
        if len(parts) != 2:
            raise ValueError("bad schedule %r (want mode:value)" % (text,))
        mode, value = parts[0].strip(), parts[1].strip()
        if mode == "fixed":
            try:
                s = int(value)
            except ValueError:
                raise ValueError("bad fixed schedule value %r" % (value,))
            if s < 1:
                raise ValueError("fixed schedule needs s >= 1, got %d" % s)
            return UnmaskSchedule.fixed(s)
        if mode == "threshold":
            try:
                p = float(value)
            except ValueError:
                raise ValueError("bad threshold schedule value %r" % (value,))
            if not (0.0 < p <= 1.0):
                raise ValueError("threshold must be in (0, 1], got %g" % p)
            return UnmaskSchedule.at_threshold(p)
        raise ValueError("unknown schedule mode %r" % (mode,))

    def format(self) -> str:
        if self.kind == "fixed":
            return "fixed:%d" % self.tokens_per_step
        return "threshold:%s" % format_float(self.threshold)


def format_float(x: float) -> str:
    """Shortest repr that round-trips (json-style)."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# generation config


@dataclass(frozen=True)
class GenerationConfig:
    """Static knobs for one generation run.

    W must divide into N = W / L blocks exactly.  ``top_k_vocab`` bounds
    the vocabulary rank any draft formula may address; ``eot_token`` is
    the id whose first occurrence marks the useful prefix for up-to-EOT
    accounting.
    """

    total_length: int
    block_length: int
    schedule: UnmaskSchedule
    top_k_vocab: int = 3
    eot_token: int = 1
    seed: int = 0

    def __post_init__(self):
        assert self.total_length >= 1 and self.block_length >= 1
        if self.total_length % self.block_length != 0:
            raise ValueError(
                "total length %d not divisible by block length %d"
                % (self.total_length, self.block_length)
            )
        assert self.top_k_vocab >= 1
        assert self.eot_token != MASK, "eot_token cannot be MASK"

    @property
    def num_blocks(self) -> int:
        return self.total_length // self.block_length


def remaining_nfe_without_speculation(state: SequenceState, schedule: UnmaskSchedule) -> int:
    """Model calls vanilla decoding still needs from ``state``.

    Exact for fixed schedules (ceil(masked / s) per block); for threshold
    schedules this is the upper bound reached when every step commits a
    single token.
    """
    s = schedule.tokens_per_step if schedule.kind == "fixed" else 1
    total = 0
    for i in range(state.active, len(state.blocks)):
        masked = state.blocks[i].length - state.blocks[i].unmasked_count
        total += math.ceil(masked / s)
    return total


# ---------------------------------------------------------------------------
# config file format: flat key/value text


_CONFIG_KEYS = ("W", "L", "schedule.mode", "schedule.s", "schedule.p", "top_k_vocab", "eot_token", "seed")


def format_config(config: GenerationConfig) -> str:
    lines = [
        "W = %d" % config.total_length,
        "L = %d" % config.block_length,
        "schedule.mode = %s" % config.schedule.kind,
    ]
    if config.schedule.kind == "fixed":
        lines.append("schedule.s = %d" % config.schedule.tokens_per_step)
    else:
        lines.append("schedule.p = %s" % format_float(config.schedule.threshold))
    lines.append("top_k_vocab = %d" % config.top_k_vocab)
    lines.append("eot_token = %d" % config.eot_token)
    lines.append("seed = %d" % config.seed)
    return "\n".join(lines) + "\n"


def parse_config(text: str, *, source: str = "<config>") -> GenerationConfig:
    """Parse the flat key/value config document.  Raises ValueError with
    the offending file and line on malformed input."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError("%s:%d: expected 'key = value', got %r" % (source, lineno, raw))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError("%s:%d: unknown key %r" % (source, lineno, key))
        if key in values:
            raise ValueError("%s:%d: duplicate key %r" % (source, lineno, key))
        values[key] = (lineno, value)

    def take_int(key):
        if key not in values:
            raise ValueError("%s: missing key %r" % (source, key))
        lineno, value = values.pop(key)
        try:
            return int(value)
        except ValueError:
            raise ValueError("%s:%d: %s must be an integer, got %r" % (source, lineno, key, value))

    w = take_int("W")
    length = take_int("L")
    if "schedule.mode" not in values:
        raise ValueError("%s: missing key 'schedule.mode'" % source)
    _, mode = values.pop("schedule.mode")
    if mode == "fixed":
        schedule = UnmaskSchedule.fixed(take_int("schedule.s"))
        if "schedule.p" in values:
            lineno, _ = values.pop("schedule.p")
            raise ValueError("%s:%d: schedule.p given for fixed mode" % (source, lineno))
    elif mode == "threshold":
        if "schedule.p" not in values:
            raise ValueError("%s: missing key 'schedule.p'" % source)
        lineno, value = values.pop("schedule.p")
        try:
            p = float(value)
        except ValueError:
            raise ValueError("%s:%d: schedule.p must be a float, got %r" % (source, lineno, value))
        schedule = UnmaskSchedule.at_threshold(p)
        if "schedule.s" in values:
            lineno, _ = values.pop("schedule.s")
            raise ValueError("%s:%d: schedule.s given for threshold mode" % (source, lineno))
    else:
        raise ValueError("%s: unknown schedule.mode %r" % (source, mode))
    top_k = take_int("top_k_vocab")
    eot = take_int("eot_token")
    seed = take_int("seed")
    try:
        return GenerationConfig(
            total_length=w,
            block_length=length,
            schedule=schedule,
            top_k_vocab=top_k,
            eot_token=eot,
            seed=seed,
        )
    except (AssertionError, ValueError) as exc:
        raise ValueError("%s: %s" % (source, exc))


# ---------------------------------------------------------------------------
# sequence state serialization (json)


def sequence_to_json(state: SequenceState) -> str:
    doc = {
        "prompt": list(state.prompt),
        "blocks": [list(b.tokens) for b in state.blocks],
        "active": state.active,
    }
    return json.dumps(doc, sort_keys=True)


def sequence_from_json(text: str) -> SequenceState:
    doc = json.loads(text)
    return SequenceState(
        prompt=tuple(int(t) for t in doc["prompt"]),
        blocks=tuple(BlockState(tokens=tuple(int(t) for t in b)) for b in doc["blocks"]),
        active=int(doc["active"]),
    )
