"""Random 3-CNF instances, a brute-force oracle, and a search-trace writer.

A formula is a tuple of clauses; a clause is a tuple of non-zero ints
(positive literal ``v``, negative literal ``-v``). Clause order, literal
order, and duplicate clauses are all meaningful: the trace writer preserves
them exactly.

The written trace mirrors a unit-propagation + branching search: every clause
set under consideration is posed as a ``Question:`` inside a ``[CALL]``
block, units are propagated with ``Found .. Let ..`` lines, branches try the
lowest-numbered variable ``True`` then ``False``, and each block closes with
``[SEP] Answer: <bool> [RETURN]`` so the reduction rule can erase it.
"""
from __future__ import annotations

import itertools
import random
from typing import Sequence

from .core import CALL, END_OF_PROMPT, END_OF_TEXT, RETURN, SEP, START_OF_TEXT

Clause = tuple[int, ...]
Formula = tuple[Clause, ...]

AND, OR, NOT = "∧", "∨", "¬"


def gen_sat(n: int, seed: int, *, ratio: float = 4.3) -> Formula:
    """Random CNF with ``round(ratio * n)`` clauses of (up to) 3 distinct vars."""
    if n < 1:
        raise ValueError("need at least one variable")
    rng = random.Random(seed)
    width = min(3, n)
    clauses = []
    for _ in range(round(ratio * n)):
        vars_ = rng.sample(range(1, n + 1), width)
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vars_))
    return tuple(clauses)


def brute_force_sat(formula: Formula, n: int) -> bool:
    """Exhaustive satisfiability check over all 2**n assignments."""
    for bits in itertools.product((False, True), repeat=n):
        asgn = {v: bits[v - 1] for v in range(1, n + 1)}
        if all(
            any((lit > 0) == asgn[abs(lit)] for lit in clause)
            for clause in formula
        ):
            return True
    return False


def literal_tokens(lit: int) -> list[str]:
    return [str(lit)] if lit > 0 else [NOT, str(-lit)]


def clause_tokens(clause: Clause) -> list[str]:
    toks = ["("]
    for i, lit in enumerate(clause):
        if i:
            toks.append(OR)
        toks += literal_tokens(lit)
    toks.append(")")
    return toks


def render_formula(formula: Formula) -> list[str]:
    toks: list[str] = []
    for i, clause in enumerate(formula):
        if i:
            toks.append(AND)
        toks += clause_tokens(clause)
    return toks


def parse_formula(tokens: Sequence[str]) -> Formula:
    """Inverse of :func:`render_formula`."""
    clauses: list[Clause] = []
    cur: list[int] | None = None
    neg = False
    for tok in tokens:
        if tok == "(":
            cur = []
        elif tok == ")":
            assert cur is not None, "stray ')'"
            clauses.append(tuple(cur))
            cur = None
        elif tok in (AND, OR):
            pass
        elif tok == NOT:
            neg = True
        else:
            assert cur is not None, f"literal {tok!r} outside clause"
            cur.append(-int(tok) if neg else int(tok))
            neg = False
    assert cur is None, "unterminated clause"
    return tuple(clauses)


def simplify(formula: Formula, var: int, value: bool) -> Formula:
    """Assign ``var``: drop satisfied clauses, strip falsified literals."""
    sat_lit = var if value else -var
    out = []
    for clause in formula:
        if sat_lit in clause:
            continue
        out.append(tuple(lit for lit in clause if lit != -sat_lit))
    return tuple(out)


def sat_prompt(formula: Formula) -> list[str]:
    return [START_OF_TEXT, *render_formula(formula), END_OF_PROMPT]


def _close(answer: bool) -> list[str]:
    return [SEP, "Answer:", str(answer), RETURN]


def _solve_block(formula: Formula) -> tuple[list[str], bool]:
    """One [CALL] block: pose the clause set, work it, close with its answer.

    Precondition: ``formula`` is non-empty and has no empty clause (callers
    resolve those outcomes directly without opening a block).
    """
    toks = [CALL, "Question:", *render_formula(formula)]

    unit = next((c for c in formula if len(c) == 1), None)
    if unit is not None:
        lit = unit[0]
        var, value = abs(lit), lit > 0
        toks += ["Found", *literal_tokens(lit), "Let", str(var), "=", str(value)]
        rest = simplify(formula, var, value)
        if any(len(c) == 0 for c in rest):
            return toks + _close(False), False
        if not rest:
            return toks + _close(True), True
        sub, answer = _solve_block(rest)
        return toks + sub + _close(answer), answer

    var = min(abs(lit) for clause in formula for lit in clause)
    answer = False
    for value in (True, False):
        toks += ["Try", str(var), "=", str(value)]
        rest = simplify(formula, var, value)
        if not rest:
            # every remaining clause satisfied by this assignment alone
            answer = True
            break
        sub, answer = _solve_block(rest)
        toks += sub
        if answer:
            break
    return toks + _close(answer), answer


def sat_trace(formula: Formula) -> tuple[list[str], bool]:
    """Full written-out chain (prompt included) and the instance's answer."""
    body, answer = _solve_block(formula)
    return sat_prompt(formula) + body + [END_OF_TEXT], answer
