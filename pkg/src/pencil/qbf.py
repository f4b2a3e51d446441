"""Quantified boolean formulas: generator, brute-force oracle, trace writer.

An instance is a fully quantified prenex CNF: every variable appears exactly
once in the prefix (in an arbitrary order, each either ``∀`` or ``∃``) over a
clause matrix numbered ``#1 ..`` in the prompt.

The written trace expands quantifiers outermost-first. A quantifier block
poses ``Question: prefix_from <quant> <var>``, tries ``False`` then ``True``,
and short-circuits the way its quantifier allows (``∃`` stops on a ``True``
branch, ``∀`` on a ``False`` one). The innermost level evaluates the matrix
clause by clause with zero-indexed ``Check #k`` lines, stopping at the first
failure. Every block closes with ``[SEP] Answer: <bool> [RETURN]``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .core import CALL, END_OF_PROMPT, END_OF_TEXT, RETURN, SEP, START_OF_TEXT
from .sat import Clause, Formula, clause_tokens, literal_tokens, parse_formula

FORALL, EXISTS = "∀", "∃"


@dataclass(frozen=True)
class QBF:
    prefix: tuple[tuple[str, int], ...]  # (quantifier, variable) outermost first
    clauses: Formula

    @property
    def n_vars(self) -> int:
        return len(self.prefix)


def gen_qbf(n: int, seed: int, *, clauses_per_var: int = 2) -> QBF:
    """Random fully quantified CNF: shuffled prefix, fair ∀/∃ coin, 2n clauses.

    Clause literals are drawn independently (variable and sign uniform), then
    exact duplicate literals are removed keeping first occurrences — opposite
    polarities of one variable may remain, so tautological clauses can occur.
    """
    if n < 1:
        raise ValueError("need at least one variable")
    rng = random.Random(seed)
    variables = rng.sample(range(1, n + 1), n)
    prefix = tuple(
        (FORALL if rng.random() < 0.5 else EXISTS, v) for v in variables
    )
    clauses = []
    for _ in range(clauses_per_var * n):
        lits = []
        for _ in range(3):
            v = rng.randint(1, n)
            lits.append(v if rng.random() < 0.5 else -v)
        seen: list[int] = []
        for lit in lits:
            if lit not in seen:
                seen.append(lit)
        clauses.append(tuple(seen))
    return QBF(prefix=prefix, clauses=tuple(clauses))


def eval_matrix(clauses: Formula, asgn: dict[int, bool]) -> bool:
    return all(
        any((lit > 0) == asgn[abs(lit)] for lit in clause) for clause in clauses
    )


def brute_force_qbf(instance: QBF) -> bool:
    def go(i: int, asgn: dict[int, bool]) -> bool:
        if i == len(instance.prefix):
            return eval_matrix(instance.clauses, asgn)
        quant, var = instance.prefix[i]
        results = (go(i + 1, {**asgn, var: val}) for val in (False, True))
        return any(results) if quant == EXISTS else all(results)

    return go(0, {})


def qbf_prompt(instance: QBF) -> list[str]:
    toks = [START_OF_TEXT]
    for quant, var in instance.prefix:
        toks += [quant, str(var)]
    toks.append(":")
    for k, clause in enumerate(instance.clauses, start=1):
        toks.append(f"#{k}")
        toks += clause_tokens(clause)
    toks.append(END_OF_PROMPT)
    return toks


def parse_qbf(tokens: Sequence[str]) -> QBF:
    """Inverse of :func:`qbf_prompt` (without the framing specials)."""
    i = 0
    prefix = []
    while tokens[i] != ":":
        prefix.append((tokens[i], int(tokens[i + 1])))
        i += 2
    matrix = [t for t in tokens[i + 1 :] if not t.startswith("#")]
    return QBF(prefix=tuple(prefix), clauses=parse_formula(matrix))


def _close(answer: bool) -> list[str]:
    return [SEP, "Answer:", str(answer), RETURN]


def _eval_block(instance: QBF, asgn: dict[int, bool]) -> tuple[list[str], bool]:
    toks = [CALL, "Question:", "evaluate"]
    for var in sorted(asgn):
        toks += [str(var), "=", str(asgn[var])]
    answer = True
    for k, clause in enumerate(instance.clauses):
        value = any((lit > 0) == asgn[abs(lit)] for lit in clause)
        toks += ["Check", f"#{k}", *clause_tokens(clause), str(value)]
        if not value:
            answer = False
            break
    if answer:
        toks += ["Formula", "=", "True"]
    return toks + _close(answer), answer


def _quant_block(
    instance: QBF, level: int, asgn: dict[int, bool]
) -> tuple[list[str], bool]:
    quant, var = instance.prefix[level]
    toks = [CALL, "Question:", "prefix_from", quant, str(var)]
    answer = False
    for value in (False, True):
        toks += ["Try", str(var), "=", str(value)]
        child = {**asgn, var: value}
        if level + 1 < len(instance.prefix):
            sub, answer = _quant_block(instance, level + 1, child)
        else:
            sub, answer = _eval_block(instance, child)
        toks += sub
        if quant == EXISTS and answer:
            break
        if quant == FORALL and not answer:
            break
    return toks + _close(answer), answer


def qbf_trace(instance: QBF) -> tuple[list[str], bool]:
    """Full written-out chain (prompt included) and the instance's answer."""
    body, answer = _quant_block(instance, 0, {})
    return qbf_prompt(instance) + body + [END_OF_TEXT], answer
