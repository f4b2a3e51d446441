"""The reduction rule and the alternating generate/reduce loop.

The rule rewrites ``C [CALL] T [SEP] A [RETURN]`` to ``C A``: once a thought
``T`` has produced its answer ``A``, the thought (and the control tokens) are
erased and only the answer is kept on top of the untouched context ``C``.

Matching is anchored at the end of the sequence (the rule fires the moment a
``[RETURN]`` is generated): ``[RETURN]`` must be the last token, ``[SEP]`` is
the last separator before it, and ``[CALL]`` is the last call before that
separator. The answer part may itself contain ``[CALL]`` tokens — reducing
then leaves that call open, which is how tail calls work.

A simplified variant ``T [SEP] T' [RETURN] => T'`` (no ``[CALL]``) is used by
the machine-simulation runtime.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .core import CALL, END_OF_TEXT, RETURN, SEP


class MalformedSequenceError(ValueError):
    """A [RETURN] was generated but the sequence has no matching rule site."""


@dataclass(frozen=True)
class Match:
    """Indices of the matched control tokens (``ret`` is ``len(seq) - 1``)."""

    call: int
    sep: int
    ret: int


def find_match(tokens: Sequence[str]) -> Match | None:
    """Locate the unique rule site, or return None if the rule cannot fire.

    The rule only applies to sequences whose final token is ``[RETURN]``.
    """
    if not tokens or tokens[-1] != RETURN:
        return None
    ret = len(tokens) - 1
    sep = None
    for i in range(ret - 1, -1, -1):
        if tokens[i] == SEP:
            sep = i
            break
        if tokens[i] == RETURN:
            return None  # malformed: an earlier [RETURN] shields the [SEP]
    if sep is None:
        return None
    for i in range(sep - 1, -1, -1):
        if tokens[i] == CALL:
            return Match(call=i, sep=sep, ret=ret)
    return None


def reduce_once(tokens: Sequence[str]) -> list[str]:
    """Apply one reduction step; raise if the final token match is malformed."""
    m = find_match(tokens)
    if m is None:
        raise MalformedSequenceError(
            "sequence does not end in a reducible [CALL] .. [SEP] .. [RETURN]"
        )
    return list(tokens[: m.call]) + list(tokens[m.sep + 1 : m.ret])


def is_reducible(tokens: Sequence[str]) -> bool:
    return find_match(tokens) is not None


def reduce_to_quiescence(tokens: Sequence[str]) -> list[str]:
    """Apply the rule until it no longer fires."""
    out = list(tokens)
    while is_reducible(out):
        out = reduce_once(out)
    return out


def reduce_simplified(tokens: Sequence[str]) -> list[str]:
    """Apply ``T [SEP] T' [RETURN] => T'`` (everything before [SEP] erased)."""
    if not tokens or tokens[-1] != RETURN:
        raise MalformedSequenceError("simplified rule needs a trailing [RETURN]")
    try:
        sep = len(tokens) - 1 - list(reversed(tokens)).index(SEP)
    except ValueError:
        raise MalformedSequenceError("simplified rule needs a [SEP]") from None
    return list(tokens[sep + 1 : len(tokens) - 1])


@dataclass(frozen=True)
class Iteration:
    """One generation segment: the live context at its [RETURN] (or end).

    ``tokens`` is the whole live sequence including the inherited context;
    ``loss_start`` is the length of that inherited context, i.e. the index of
    the first freshly generated token.
    """

    tokens: tuple[str, ...]
    loss_start: int

    @property
    def generated(self) -> tuple[str, ...]:
        return self.tokens[self.loss_start :]


@dataclass(frozen=True)
class Reduction:
    """Shape of one reduction: kept-context length and answer-part length."""

    context_len: int  # |C|  (tokens before the matched [CALL])
    answer_len: int  # |A|  (tokens between [SEP] and [RETURN])


@dataclass
class PencilRun:
    """Complete record of a generate/reduce episode."""

    prompt: tuple[str, ...]
    iterations: list[Iteration] = field(default_factory=list)
    reductions: list[Reduction] = field(default_factory=list)
    final: tuple[str, ...] = ()
    max_context: int = 0
    total_generated: int = 0

    @property
    def num_reductions(self) -> int:
        return len(self.reductions)

    @property
    def final_answer(self) -> tuple[str, ...]:
        """Tokens after the prompt in the final live context, before EOS."""
        tail = list(self.final[len(self.prompt) :])
        if tail and tail[-1] == END_OF_TEXT:
            tail = tail[:-1]
        return tuple(tail)


NextToken = Callable[[Sequence[str]], str]


def run_pencil(
    next_token: NextToken,
    prompt: Sequence[str],
    *,
    max_tokens: int = 1_000_000,
    simplified: bool = False,
) -> PencilRun:
    """Drive the alternating generation/reduction loop to the end-of-text.

    ``next_token`` sees the current live context and returns one token. Every
    generated ``[RETURN]`` triggers one reduction; generation then continues
    from the reduced context. ``<|endoftext|>`` ends the run.
    """
    run = PencilRun(prompt=tuple(prompt))
    ctx = list(prompt)
    run.max_context = len(ctx)
    seg_start = len(ctx)
    for _ in range(max_tokens):
        tok = next_token(ctx)
        ctx.append(tok)
        run.total_generated += 1
        run.max_context = max(run.max_context, len(ctx))
        if tok == RETURN:
            run.iterations.append(
                Iteration(tokens=tuple(ctx), loss_start=seg_start)
            )
            if simplified:
                kept = reduce_simplified(ctx)
                run.reductions.append(
                    Reduction(context_len=0, answer_len=len(kept))
                )
                ctx = kept
            else:
                m = find_match(ctx)
                if m is None:
                    raise MalformedSequenceError(
                        "generated [RETURN] with no reducible site"
                    )
                run.reductions.append(
                    Reduction(
                        context_len=m.call, answer_len=m.ret - m.sep - 1
                    )
                )
                ctx = reduce_once(ctx)
            seg_start = len(ctx)
        elif tok == END_OF_TEXT:
            run.iterations.append(
                Iteration(tokens=tuple(ctx), loss_start=seg_start)
            )
            run.final = tuple(ctx)
            return run
    raise RuntimeError(f"no <|endoftext|> within {max_tokens} tokens")


def trace_oracle(body: Sequence[str]) -> NextToken:
    """A next-token function that replays a recorded generation body.

    The body is the concatenation of all generation segments (everything the
    model would emit after the prompt, reductions excluded). The returned
    callable ignores its context argument beyond sanity of use and yields the
    body tokens in order.
    """
    it = iter(body)

    def predictor(_ctx: Sequence[str]) -> str:
        try:
            return next(it)
        except StopIteration:
            raise MalformedSequenceError("trace exhausted before end-of-text")

    return predictor


def scaffold(prompt: Sequence[str], body: Sequence[str], **kw) -> PencilRun:
    """Split a full (unreduced) chain into its live iterations.

    ``prompt ++ body`` is the complete written-out chain; by construction the
    concatenation of the run's generated segments equals ``body`` again.
    """
    return run_pencil(trace_oracle(body), prompt, **kw)


# --------------------------------------------------------------------------
# Attention-cost model
# --------------------------------------------------------------------------
#
# Causal attention over a growing context costs, per processed token, a number
# of pairwise query-key interactions equal to its position (context length
# including itself); we count 2 units per interaction (one multiply, one
# accumulate). Generating a segment that grows the context from a to b costs
#     sum_{j=a+1..b} 2j = (a + b + 1) (b - a),
# and re-encoding the answer part (length r) on top of a kept context (length
# c) after a reduction costs
#     sum_{j=c+1..c+r} 2j = (c + (c + r) + 1) r.
# The closed forms below are exactly twice the per-token position sum that
# ``count_flops`` accumulates.


def formula_flops(run: PencilRun) -> tuple[int, int]:
    """Closed-form (generation_cost, reduction_cost) for a recorded run."""
    generation = 0
    for it in run.iterations:
        a, b = it.loss_start, len(it.tokens)
        generation += (a + b + 1) * (b - a)
    reduction = 0
    for red in run.reductions:
        c, r = red.context_len, red.answer_len
        reduction += (c + (c + r) + 1) * r
    return generation, reduction


def count_flops(run: PencilRun) -> int:
    """Per-token oracle: sum of context positions actually processed.

    Each generated token is charged its context length (itself included) and
    each answer token re-encoded by a reduction is charged its new position.
    The closed-form total equals exactly ``2 *`` this count.
    """
    positions = 0
    for it in run.iterations:
        for j in range(it.loss_start + 1, len(it.tokens) + 1):
            positions += j
    for red in run.reductions:
        for j in range(red.context_len + 1, red.context_len + red.answer_len + 1):
            positions += j
    return positions


def total_flops(run: PencilRun) -> int:
    g, r = formula_flops(run)
    return g + r


def flops_without_reduction(iterations: Iterable[Iteration]) -> int:
    """Cost of writing the same full chain with no erasing.

    The full chain length is the prompt plus every generated segment; the
    cost is the generation formula over one single segment spanning it.
    """
    its = list(iterations)
    if not its:
        return 0
    a = its[0].loss_start
    b = a + sum(len(it.tokens) - it.loss_start for it in its)
    return (a + b + 1) * (b - a)
