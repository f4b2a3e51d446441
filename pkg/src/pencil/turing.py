"""Single-tape Turing machines simulated as token streams.

A machine's run is re-expressed as autoregressive generation: each step emits
an *update token* ``(state, symbol, move)`` recording what the step did, and
the tape/head/state are recoverable by folding those updates over a blank
initial configuration.  A summarization function condenses any update history
into the shortest token sequence that reproduces the live configuration,
which lets the PENCIL runtime periodically erase the history and keep the
context proportional to the tape footprint instead of the running time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, NamedTuple, Sequence

from .core import RETURN, SEP
from .reduction import reduce_simplified

Verdict = Literal["accept", "reject", "timeout"]

MOVES = (-1, 0, 1)


class UpdateToken(NamedTuple):
    """One simulation step: enter ``state``, after writing ``symbol`` and moving."""

    state: str
    symbol: str
    move: int


@dataclass(frozen=True)
class TMSpec:
    """A single-tape machine with a total transition table that never writes blank."""

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    blank: str
    start: str
    transitions: Mapping[tuple[str, str], tuple[str, str, int]]
    accept: frozenset[str] = field(default_factory=frozenset)
    reject: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if len(set(self.states)) != len(self.states) or not self.states:
            raise ValueError("states must be non-empty and distinct")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet symbols must be distinct")
        if self.blank not in self.alphabet:
            raise ValueError("blank must be part of the alphabet")
        if len(self.alphabet) < 2:
            raise ValueError("alphabet needs at least one non-blank symbol")
        if self.start not in self.states:
            raise ValueError(f"unknown start state {self.start!r}")
        state_set = set(self.states)
        for name, group in (("accept", self.accept), ("reject", self.reject)):
            if not set(group) <= state_set:
                raise ValueError(f"{name} set contains unknown states")
        if self.accept & self.reject:
            raise ValueError("accept and reject sets must be disjoint")
        need = {(q, a) for q in self.states for a in self.alphabet}
        have = set(self.transitions)
        if have != need:
            missing = sorted(need - have)[:3]
            extra = sorted(have - need)[:3]
            raise ValueError(
                f"transition table must cover exactly states x alphabet "
                f"(missing {missing}, extra {extra})"
            )
        for key, (q2, a2, d2) in self.transitions.items():
            if q2 not in state_set:
                raise ValueError(f"transition {key} targets unknown state {q2!r}")
            if a2 == self.blank or a2 not in self.alphabet:
                raise ValueError(
                    f"transition {key} writes {a2!r}; writes must be non-blank symbols"
                )
            if d2 not in MOVES:
                raise ValueError(f"transition {key} moves by {d2!r}")

    @property
    def halting(self) -> frozenset[str]:
        return self.accept | self.reject

    def symbols(self) -> tuple[str, ...]:
        """Non-blank symbols, in alphabet order."""
        return tuple(a for a in self.alphabet if a != self.blank)


@dataclass(frozen=True)
class Configuration:
    """Machine snapshot: control state, sparse non-blank tape, head cell."""

    state: str
    tape: Mapping[int, str]
    head: int


def initial_config(spec: TMSpec) -> Configuration:
    """Blank tape, head at cell 0, start state."""
    return Configuration(spec.start, {}, 0)


def input_config(spec: TMSpec, input_symbols: Sequence[str]) -> Configuration:
    """Input written on cells 0..n-1 with the head parked just right of it."""
    _check_input(spec, input_symbols)
    tape = {i: a for i, a in enumerate(input_symbols)}
    return Configuration(spec.start, tape, len(input_symbols))


def _check_input(spec: TMSpec, input_symbols: Sequence[str]) -> None:
    for a in input_symbols:
        if a == spec.blank or a not in spec.alphabet:
            raise ValueError(f"input symbol {a!r} is not a non-blank alphabet symbol")


@dataclass(frozen=True)
class TMRunResult:
    verdict: Verdict
    steps: int
    space: int


def tm_run(spec: TMSpec, input_symbols: Sequence[str], step_cap: int) -> TMRunResult:
    """Run the machine directly.

    ``steps`` counts executed transitions; halting is recognized on *entering*
    an accept/reject state, so even a machine that starts in one takes its
    first step.  ``space`` is the number of cells in the span touched by the
    run: every head position visited plus every cell the input occupied.
    """
    if step_cap < 1:
        raise ValueError("step_cap must be at least 1")
    _check_input(spec, input_symbols)
    tape = {i: a for i, a in enumerate(input_symbols)}
    head = len(input_symbols)
    state = spec.start
    lo, hi = 0, head
    for steps in range(1, step_cap + 1):
        state, a2, d2 = spec.transitions[(state, tape.get(head, spec.blank))]
        tape[head] = a2
        head += d2
        lo = min(lo, head)
        hi = max(hi, head)
        if state in spec.accept:
            return TMRunResult("accept", steps, hi - lo + 1)
        if state in spec.reject:
            return TMRunResult("reject", steps, hi - lo + 1)
    return TMRunResult("timeout", step_cap, hi - lo + 1)


# --------------------------------------------------------------------------
# Update tokens: the machine as an autoregressive token generator.
# --------------------------------------------------------------------------


def apply_update(config: Configuration, token: UpdateToken) -> Configuration:
    """Write the token's symbol at the head, move, enter the token's state."""
    tape = dict(config.tape)
    tape[config.head] = token.symbol
    return Configuration(token.state, tape, config.head + token.move)


def apply_updates(config: Configuration, seq: Iterable[UpdateToken]) -> Configuration:
    """Fold :func:`apply_update` left-to-right over the sequence."""
    tape = dict(config.tape)
    head = config.head
    state = config.state
    for token in seq:
        tape[head] = token.symbol
        head += token.move
        state = token.state
    return Configuration(state, tape, head)


def encode_input(spec: TMSpec, input_symbols: Sequence[str]) -> list[UpdateToken]:
    """Input as update tokens: write each symbol left-to-right, end right of it.

    Folding the result over the blank initial configuration reproduces
    :func:`input_config` exactly.
    """
    _check_input(spec, input_symbols)
    return [UpdateToken(spec.start, a, +1) for a in input_symbols]


def am_next(spec: TMSpec, seq: Sequence[UpdateToken]) -> UpdateToken:
    """Next update token: the transition taken from the replayed configuration."""
    config = apply_updates(initial_config(spec), seq)
    symbol = config.tape.get(config.head, spec.blank)
    return UpdateToken(*spec.transitions[(config.state, symbol)])


@dataclass(frozen=True)
class AMRunResult:
    verdict: Verdict
    tokens: tuple[UpdateToken, ...]


def run_am(spec: TMSpec, input_symbols: Sequence[str], step_cap: int) -> AMRunResult:
    """Generate update tokens until one carries a halting state (or the cap)."""
    if step_cap < 1:
        raise ValueError("step_cap must be at least 1")
    config = input_config(spec, input_symbols)
    tape = dict(config.tape)
    head = config.head
    state = config.state
    out: list[UpdateToken] = []
    for _ in range(step_cap):
        state, a2, d2 = spec.transitions[(state, tape.get(head, spec.blank))]
        token = UpdateToken(state, a2, d2)
        out.append(token)
        tape[head] = a2
        head += d2
        if state in spec.accept:
            return AMRunResult("accept", tuple(out))
        if state in spec.reject:
            return AMRunResult("reject", tuple(out))
    return AMRunResult("timeout", tuple(out))


# --------------------------------------------------------------------------
# Configuration serialization and the summarization (state) function.
# --------------------------------------------------------------------------


def compute_move(i: int, p: int, max_pos: int, min_pos: int) -> int:
    """Move field of the i-th serialization token (1-indexed).

    The serialization sweeps the non-blank span left-to-right, then walks the
    head back left if it rests below the right end.
    """
    span = max_pos - min_pos
    if 1 <= i <= span:
        return +1
    if i == span + 1 and p == max_pos + 1:
        return +1
    if i == span + 1 and p == max_pos:
        return 0
    if i >= span + 1 and p <= max_pos - 1:
        return -1
    raise ValueError(f"no serialization move for i={i}, p={p} on span {span}")


def embed(config: Configuration) -> list[UpdateToken]:
    """Serialize a configuration into update tokens that rebuild it.

    Folding the result over the blank initial configuration yields a
    configuration identical to ``config`` up to a uniform shift of all cell
    indices (:func:`translationally_equal`).  An all-blank tape serializes to
    the empty sequence.
    """
    if not config.tape:
        return []
    max_pos = max(config.tape)
    min_pos = min(config.tape)
    p = config.head
    if not (min_pos - 1 <= p <= max_pos + 1):
        raise ValueError(
            f"head {p} is outside the writable span [{min_pos - 1}, {max_pos + 1}]"
        )
    n = max_pos - min_pos + max(max_pos - p - 1, 0) + 1
    out: list[UpdateToken] = []
    pos = min_pos
    for i in range(1, n + 1):
        try:
            symbol = config.tape[pos]
        except KeyError:
            raise ValueError(f"tape has a blank gap at cell {pos}") from None
        move = compute_move(i, p, max_pos, min_pos)
        out.append(UpdateToken(config.state, symbol, move))
        pos += move
    return out


def state_fn(spec: TMSpec, seq: Sequence[UpdateToken]) -> list[UpdateToken]:
    """Condense an update history into the serialization of its configuration.

    The result generates the same future as ``seq``: replaying it restores
    the tape contents, head offset, and control state.
    """
    return embed(apply_updates(initial_config(spec), seq))


def translationally_equal(c1: Configuration, c2: Configuration) -> bool:
    """True when the configurations differ only by a uniform shift of cells."""
    return _canonical(c1) == _canonical(c2)


def _canonical(c: Configuration) -> tuple:
    if not c.tape:
        # With nothing written, any head cell is the same configuration
        # shifted, so the head does not discriminate.
        return (c.state, (), 0)
    lo = min(c.tape)
    return (c.state, tuple(sorted((k - lo, v) for k, v in c.tape.items())), c.head - lo)


# --------------------------------------------------------------------------
# The PENCIL run: generation with periodic history summarization.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PencilTMRun:
    """Bookkeeping of a summarizing run.

    ``total_tokens`` counts every generated token (updates, separators, and
    summary tokens); the prompt is not generated.  ``max_context`` is the
    peak live-context length, measured after every append, prompt included.
    ``state_space`` is the longest summary observed at any point of the run,
    prompt and final step included.
    """

    verdict: Verdict
    steps: int
    total_tokens: int
    max_context: int
    reductions: int
    state_space: int
    generated: tuple


def run_pencil_tm(
    spec: TMSpec, input_symbols: Sequence[str], step_cap: int
) -> PencilTMRun:
    """Simulate with summarization: erase history once it doubles the summary.

    Before every generation step except the first, if the context has grown
    to at least twice its summary, emit ``[SEP]``, the summary tokens, and
    ``[RETURN]``, then erase everything before the summary.  The verdict is
    carried by the generated update token, checked immediately on generation.
    """
    if step_cap < 1:
        raise ValueError("step_cap must be at least 1")
    prompt = encode_input(spec, input_symbols)
    ctx: list = list(prompt)
    summary = state_fn(spec, ctx)
    state_space = len(summary)
    max_context = len(ctx)
    total = 0
    reductions = 0
    steps = 0
    generated: list = []
    verdict: Verdict = "timeout"
    for step in range(1, step_cap + 1):
        if step > 1 and len(ctx) >= 2 * len(summary):
            for tok in (SEP, *summary, RETURN):
                ctx.append(tok)
                generated.append(tok)
                total += 1
                max_context = max(max_context, len(ctx))
            ctx = reduce_simplified(ctx)
            reductions += 1
        token = am_next(spec, ctx)
        ctx.append(token)
        generated.append(token)
        total += 1
        steps += 1
        max_context = max(max_context, len(ctx))
        summary = state_fn(spec, ctx)
        state_space = max(state_space, len(summary))
        if token.state in spec.accept:
            verdict = "accept"
            break
        if token.state in spec.reject:
            verdict = "reject"
            break
    return PencilTMRun(
        verdict=verdict,
        steps=steps,
        total_tokens=total,
        max_context=max_context,
        reductions=reductions,
        state_space=state_space,
        generated=tuple(generated),
    )


# --------------------------------------------------------------------------
# Machine construction: random machines and a space-reusing sweeper.
# --------------------------------------------------------------------------


def gen_tm(seed: int) -> TMSpec:
    """Draw a small random machine.

    2-4 states, 1-2 non-blank symbols, a uniform total transition table, and
    an accept (resp. reject) state each designated with probability 1/2.
    Deterministic in ``seed``.
    """
    rng = random.Random(seed)
    states = tuple(f"q{i}" for i in range(rng.choice((2, 3, 4))))
    alphabet = ("_",) + ("a", "b")[: rng.choice((1, 2))]
    symbols = alphabet[1:]
    transitions = {
        (q, a): (rng.choice(states), rng.choice(symbols), rng.choice(MOVES))
        for q in states
        for a in alphabet
    }
    accept = frozenset([rng.choice(states)] if rng.random() < 0.5 else [])
    reject: frozenset[str] = frozenset()
    if rng.random() < 0.5:
        rest = [q for q in states if q not in accept]
        reject = frozenset([rng.choice(rest)])
    return TMSpec(
        states=states,
        alphabet=alphabet,
        blank="_",
        start="q0",
        transitions=transitions,
        accept=accept,
        reject=reject,
    )


def make_sweeper(rounds: int) -> TMSpec:
    """A machine that shuttles between end markers ``rounds`` times, then accepts.

    Run it on an input shaped ``L 1 1 ... 1``: the first step caps the tape
    with an ``R`` marker, after which every pass rewrites the same cells, so
    running time grows with ``rounds`` while the tape footprint stays fixed.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    states = (
        ("init",)
        + tuple(f"left{i}" for i in range(rounds))
        + tuple(f"right{i}" for i in range(rounds))
        + ("done",)
    )
    alphabet = ("_", "1", "L", "R")
    transitions: dict[tuple[str, str], tuple[str, str, int]] = {}
    transitions[("init", "_")] = ("left0", "R", -1)
    for i in range(rounds):
        transitions[(f"left{i}", "1")] = (f"left{i}", "1", -1)
        transitions[(f"left{i}", "L")] = (f"right{i}", "L", +1)
        transitions[(f"right{i}", "1")] = (f"right{i}", "1", +1)
        nxt = ("done", "R", 0) if i == rounds - 1 else (f"left{i + 1}", "R", -1)
        transitions[(f"right{i}", "R")] = nxt
    # Unreachable (state, symbol) pairs still need rows for the table to be
    # total; send them straight to the halting state.
    for q in states:
        for a in alphabet:
            transitions.setdefault((q, a), ("done", "1", 0))
    return TMSpec(
        states=states,
        alphabet=alphabet,
        blank="_",
        start="init",
        transitions=transitions,
        accept=frozenset({"done"}),
        reject=frozenset(),
    )


def sweeper_input(cells: int) -> list[str]:
    """The tape shape :func:`make_sweeper` expects: ``L`` then ``cells`` ones."""
    if cells < 1:
        raise ValueError("cells must be at least 1")
    return ["L"] + ["1"] * cells


# --------------------------------------------------------------------------
# Text format: one file per machine, round-trippable.
# --------------------------------------------------------------------------

_HEADER_KEYS = ("alphabet", "blank", "states", "start", "accept", "reject")


def format_tm(spec: TMSpec) -> str:
    """Render a machine as text: header lines, then one transition row each.

    Rows read ``q a -> q' a' d``.  States and symbols must be free of
    whitespace, which :class:`TMSpec` tokens produced here always are.
    """
    for name in (*spec.states, *spec.alphabet):
        if not name or any(c.isspace() for c in name):
            raise ValueError(f"cannot format token {name!r} containing whitespace")
    lines = [
        "alphabet: " + " ".join(spec.alphabet),
        f"blank: {spec.blank}",
        "states: " + " ".join(spec.states),
        f"start: {spec.start}",
        "accept: " + " ".join(sorted(spec.accept)),
        "reject: " + " ".join(sorted(spec.reject)),
    ]
    for q in spec.states:
        for a in spec.alphabet:
            q2, a2, d2 = spec.transitions[(q, a)]
            move = {1: "+1", 0: "0", -1: "-1"}[d2]
            lines.append(f"{q} {a} -> {q2} {a2} {move}")
    return "\n".join(lines) + "\n"


def parse_tm(text: str) -> TMSpec:
    """Parse the :func:`format_tm` text format (blank lines and # comments ok)."""
    header: dict[str, list[str]] = {}
    transitions: dict[tuple[str, str], tuple[str, str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" in line:
            left, _, right = line.partition("->")
            lhs = left.split()
            rhs = right.split()
            if len(lhs) != 2 or len(rhs) != 3:
                raise ValueError(f"line {lineno}: expected 'q a -> q2 a2 d'")
            try:
                move = int(rhs[2])
            except ValueError:
                raise ValueError(f"line {lineno}: bad move {rhs[2]!r}") from None
            key = (lhs[0], lhs[1])
            if key in transitions:
                raise ValueError(f"line {lineno}: duplicate row for {key}")
            transitions[key] = (rhs[0], rhs[1], move)
        else:
            key, _, rest = line.partition(":")
            key = key.strip()
            if key not in _HEADER_KEYS:
                raise ValueError(f"line {lineno}: unknown header {key!r}")
            if key in header:
                raise ValueError(f"line {lineno}: duplicate header {key!r}")
            header[key] = rest.split()
    missing = [k for k in _HEADER_KEYS if k not in header and k not in ("accept", "reject")]
    if missing:
        raise ValueError(f"missing header lines: {', '.join(missing)}")
    for single in ("blank", "start"):
        if len(header[single]) != 1:
            raise ValueError(f"header {single!r} must hold exactly one token")
    return TMSpec(
        states=tuple(header["states"]),
        alphabet=tuple(header["alphabet"]),
        blank=header["blank"][0],
        start=header["start"][0],
        transitions=transitions,
        accept=frozenset(header.get("accept", [])),
        reject=frozenset(header.get("reject", [])),
    )
