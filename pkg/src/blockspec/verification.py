"""Lossless draft verification.

One verify call owns one model call's worth of progress: advance the
block once with the target marginals, then repeatedly look for a draft
whose cumulative unmasked count and full content match the state just
reached.  A match means the draft equals the state vanilla decoding
would have produced, so its marginals are the model's distribution for
that exact state and can drive the next advance for free.  On a miss we
simply stop with whatever the target produced: output never depends on
draft quality, only speed does.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .core import BlockState, Marginals, UnmaskSchedule
from .drafting import DraftBlock, order_positions


def advance(block: BlockState, marginals: Marginals, schedule: UnmaskSchedule) -> Tuple[BlockState, int]:
    """One denoising step: unmask the scheduled positions greedily.

    Fixed{s} takes the top min(s, masked) positions by top-1 probability;
    Threshold{p} takes every position clearing p and at least one.  Each
    chosen position commits its argmax token.  Ties break toward lower
    position index and lower token id, matching the ranking module.
    """
    masked = block.masked_positions
    if not masked:
        raise ValueError("advance on a fully unmasked block")
    assert marginals.block_length == block.length
    ordered = order_positions(marginals, block)
    if schedule.kind == "fixed":
        chosen = ordered[: min(schedule.tokens_per_step, len(ordered))]
    else:
        chosen = tuple(n for n in ordered if marginals.top1_prob(n) >= schedule.threshold)
        if not chosen:
            chosen = ordered[:1]
    out = block
    for n in chosen:
        out = out.with_token(n, marginals.argmax_token(n))
    return out, len(chosen)


@dataclass(frozen=True)
class VerifyOutcome:
    """Result of one verify call.

    ``adopted_marginals`` is the last accepted draft's distribution
    (None when the single advance came straight from the fresh target);
    the engine uses it as the ranking source for the next round of
    drafts.  ``realized_s`` logs the token count of every step taken.
    """

    new_block: BlockState
    steps_advanced: int
    accepted_levels: Tuple[int, ...]
    adopted_marginals: Optional[Marginals]
    realized_s: Tuple[int, ...]


def verify(
    block: BlockState,
    target: Marginals,
    drafts: Sequence[DraftBlock],
    draft_marginals: Sequence[Marginals],
    schedule: UnmaskSchedule,
) -> VerifyOutcome:
    """Advance once with ``target``, then chain through matching drafts.

    The scan restarts from the head of the remaining draft list after
    every acceptance; a draft is eligible only when its step_tag equals
    the new cumulative unmasked count (threshold steps that jump past a
    draft's count simply never match it) and is accepted only on
    token-for-token equality over the whole block.
    """
    if len(drafts) != len(draft_marginals):
        raise ValueError("drafts and draft_marginals length mismatch")
    current, s0 = advance(block, target, schedule)
    realized: List[int] = [s0]
    accepted: List[int] = []
    adopted: Optional[Marginals] = None
    remaining = list(zip(drafts, draft_marginals))
    while not current.is_complete:
        hit = None
        for entry in remaining:
            d, m = entry
            if d.step_tag == current.unmasked_count and d.block.tokens == current.tokens:
                hit = entry
                break
        if hit is None:
            break
        remaining.remove(hit)
        accepted.append(hit[0].level)
        adopted = hit[1]
        current, s = advance(current, adopted, schedule)
        realized.append(s)
    return VerifyOutcome(
        new_block=current,
        steps_advanced=len(realized),
        accepted_levels=tuple(accepted),
        adopted_marginals=adopted,
        realized_s=tuple(realized),
    )


def nfe_saving_factor(total_s: Sequence[int], accepted_s: Sequence[int]) -> float:
    """Saved-call factor: sum(S_t) / (sum(S_t) - sum(accepted S)).

    With S identically 1 this reduces to W / (W - M) for M accepted
    steps out of W.
    """
    total = sum(total_s)
    saved = sum(accepted_s)
    denominator = total - saved
    if denominator <= 0:
        raise ValueError("saving factor denominator is %d" % denominator)
    return total / denominator
