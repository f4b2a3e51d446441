"""Exact-rational interpreter for average-hard-attention sequence programs.

The language builds *sequence-to-embedding* functions out of five primitives —
token embeddings, positional features, concatenation, linear maps, and
average-hard attention — plus pointwise nonlinear activations (ReLU, multiply,
square, ReGLU).  Expressions form DAGs; a :class:`Program` designates a result
of vocabulary dimension that is decoded by unique argmax into the next token.
All arithmetic uses exact rationals (``int`` / :class:`fractions.Fraction`),
so repeated evaluation is bit-identical and attention ties are resolved
exactly, never by floating-point accident.

On top of the primitives sits an operator library: arithmetic, elementwise
max/min, boolean logic, integer comparisons, one-hot outer products, running
aggregates (average, sum, max, min, and, or), positional predicates, and
content-based retrieval (rightmost hard attention, rightmost best match by
squared distance, rightmost exact match with a default).

:func:`build_tm_program` assembles these operators into a next-token program
that drives the simulation loop of :mod:`pencil.turing` for any machine: it
generates update tokens, decides when the context is worth summarizing, emits
``[SEP]``, serializes the live tape, and closes with ``[RETURN]`` — matching
:func:`pencil.turing.run_pencil_tm` token for token.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence, Union

from .core import RETURN, SEP
from .reduction import reduce_simplified
from .turing import MOVES, PencilTMRun, TMSpec, UpdateToken, encode_input, run_pencil_tm

Rational = Union[int, Fraction]


class FaspTypeError(TypeError):
    """Construction-time error: bad dimension, argument kind, or value type."""


class AmbiguousDecode(ValueError):
    """The result embedding has a tied argmax, so no single token is decodable."""


class EquivalenceError(ValueError):
    """A program's prediction disagreed with the machine runtime's token."""


def _rat(value: object) -> Rational:
    """Normalize one number to an exact rational (int preferred)."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else value
    raise FaspTypeError(
        f"exact rational required, got {type(value).__name__}: {value!r}"
    )


def _vec(values: object) -> tuple[Rational, ...]:
    """Normalize a number or a sequence of numbers to a non-empty tuple."""
    if isinstance(values, (bool, int, Fraction)):
        return (_rat(values),)
    if isinstance(values, (str, bytes)) or not isinstance(values, Iterable):
        raise FaspTypeError(f"vector of rationals required, got {values!r}")
    out = tuple(_rat(v) for v in values)
    if not out:
        raise FaspTypeError("vectors must be non-empty")
    return out


class FaspExpr:
    """One node of an expression DAG; build via this module's constructors.

    ``dim`` is the output dimension, fixed at construction.  ``boolean`` marks
    nodes whose values are promised to stay in {0, 1}; sessions created with
    ``check_booleans=True`` verify the promise on every evaluation.
    """

    __slots__ = ("kind", "dim", "children", "payload", "boolean")

    def __init__(
        self,
        kind: str,
        dim: int,
        children: tuple["FaspExpr", ...] = (),
        payload: object = None,
        boolean: bool = False,
    ) -> None:
        if dim < 1:
            raise FaspTypeError("expressions need output dimension >= 1")
        for child in children:
            if not isinstance(child, FaspExpr):
                raise FaspTypeError(f"child must be a FaspExpr, got {child!r}")
        self.kind = kind
        self.dim = dim
        self.children = children
        self.payload = payload
        self.boolean = boolean

    def __repr__(self) -> str:
        flag = " boolean" if self.boolean else ""
        return f"<FaspExpr {self.kind} dim={self.dim}{flag}>"


def _boolean(expr: FaspExpr) -> FaspExpr:
    expr.boolean = True
    return expr


# ---------------------------------------------------------------------------
# The five primitives
# ---------------------------------------------------------------------------


def token_embedding(
    table: Mapping[Hashable, object],
    default: object = None,
    *,
    boolean: bool = False,
) -> FaspExpr:
    """Per-token lookup: the value at position j is ``table[seq[j]]``.

    Tokens missing from the table fall back to ``default`` when given; with an
    empty table and a default this is a constant function of the input.
    """
    norm = {tok: _vec(v) for tok, v in table.items()}
    fallback = _vec(default) if default is not None else None
    dims = {len(v) for v in norm.values()}
    if fallback is not None:
        dims.add(len(fallback))
    if not dims:
        raise FaspTypeError("an empty embedding table needs a default value")
    if len(dims) != 1:
        raise FaspTypeError(f"embedding rows disagree on dimension: {sorted(dims)}")
    return FaspExpr(
        "token", dims.pop(), payload=(norm, fallback), boolean=boolean
    )


def const(*values: object) -> FaspExpr:
    """Constant function of any input sequence."""
    payload = values[0] if len(values) == 1 else values
    return token_embedding({}, default=payload)


def positional_feature(feature: str) -> FaspExpr:
    """Scalar feature of the position index j (1-based): 0, 1[j = 1], or j."""
    if feature not in ("zero", "is_first", "seq_len"):
        raise FaspTypeError(f"unknown positional feature {feature!r}")
    return FaspExpr("pos", 1, payload=feature, boolean=feature == "is_first")


def concat(*children: FaspExpr) -> FaspExpr:
    """Stack child vectors into one vector."""
    if not children:
        raise FaspTypeError("concat needs at least one child")
    kids = tuple(children)
    dim = sum(c.dim if isinstance(c, FaspExpr) else _bad(c) for c in kids)
    return FaspExpr("concat", dim, kids)


def _bad(child: object) -> int:
    raise FaspTypeError(f"expected a FaspExpr, got {child!r}")


def linear(matrix: Sequence[Sequence[object]], child: FaspExpr) -> FaspExpr:
    """Exact matrix application: row count is the output dimension."""
    if not isinstance(child, FaspExpr):
        _bad(child)
    rows = []
    for row in matrix:
        row = _vec(row) if not isinstance(row, (int, Fraction)) else (_rat(row),)
        if len(row) != child.dim:
            raise FaspTypeError(
                f"matrix row width {len(row)} != child dimension {child.dim}"
            )
        rows.append(tuple((i, c) for i, c in enumerate(row) if c))
    if not rows:
        raise FaspTypeError("matrix needs at least one row")
    return FaspExpr("linear", len(rows), (child,), payload=tuple(rows))


def aha(query: FaspExpr, key: FaspExpr, value: FaspExpr) -> FaspExpr:
    """Average-hard attention over all prefixes of the input.

    At length n, scores are dot products of the query (evaluated at the full
    prefix) against the key at every prefix j <= n; the value is averaged
    uniformly over the score-maximizing positions.
    """
    for part in (query, key, value):
        if not isinstance(part, FaspExpr):
            _bad(part)
    if query.dim != key.dim:
        raise FaspTypeError(
            f"query dimension {query.dim} != key dimension {key.dim}"
        )
    return FaspExpr("aha", value.dim, (query, key, value))


def activation(name: str, *children: FaspExpr) -> FaspExpr:
    """Pointwise nonlinearity: relu(x), square(x), multiply(x, y), reglu(x, y).

    Two-argument forms broadcast a scalar against a vector.
    """
    for child in children:
        if not isinstance(child, FaspExpr):
            _bad(child)
    if name in ("relu", "square"):
        if len(children) != 1:
            raise FaspTypeError(f"{name} takes exactly one argument")
        return FaspExpr("act", children[0].dim, children, payload=name)
    if name in ("multiply", "reglu"):
        if len(children) != 2:
            raise FaspTypeError(f"{name} takes exactly two arguments")
        a, b = children
        if a.dim != b.dim and 1 not in (a.dim, b.dim):
            raise FaspTypeError(
                f"{name} needs equal dimensions or a scalar side, "
                f"got {a.dim} and {b.dim}"
            )
        return FaspExpr("act", max(a.dim, b.dim), children, payload=name)
    raise FaspTypeError(f"unknown activation {name!r}")


def relu(x: FaspExpr) -> FaspExpr:
    return activation("relu", x)


def square(x: FaspExpr) -> FaspExpr:
    return activation("square", x)


def multiply(a: object, b: object) -> FaspExpr:
    a, b = _lift_loose(a, b)
    return activation("multiply", a, b)


def reglu(a: object, b: object) -> FaspExpr:
    a, b = _lift_loose(a, b)
    return activation("reglu", a, b)


# ---------------------------------------------------------------------------
# Linear-algebra conveniences
# ---------------------------------------------------------------------------


def _lift_like(value: object, template: FaspExpr) -> FaspExpr:
    """Turn a literal into a constant of the template's dimension."""
    if isinstance(value, (bool, int, Fraction)):
        return const(tuple([_rat(value)] * template.dim))
    return const(_vec(value))


def _pair(a: object, b: object) -> tuple[FaspExpr, FaspExpr]:
    """Lift literals and insist both sides share one dimension."""
    if not isinstance(a, FaspExpr) and not isinstance(b, FaspExpr):
        raise FaspTypeError("at least one operand must be a FaspExpr")
    if not isinstance(a, FaspExpr):
        a = _lift_like(a, b)
    if not isinstance(b, FaspExpr):
        b = _lift_like(b, a)
    if a.dim != b.dim:
        raise FaspTypeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return a, b


def _lift_loose(a: object, b: object) -> tuple[FaspExpr, FaspExpr]:
    """Lift literals to scalars, leaving broadcasting to the activation."""
    if not isinstance(a, FaspExpr):
        a = const(_vec(a))
    if not isinstance(b, FaspExpr):
        b = const(_vec(b))
    return a, b


def add(a: object, b: object) -> FaspExpr:
    a, b = _pair(a, b)
    rows = tuple(((i, 1), (a.dim + i, 1)) for i in range(a.dim))
    return FaspExpr("linear", a.dim, (concat(a, b),), payload=rows)


def minus(a: object, b: object) -> FaspExpr:
    a, b = _pair(a, b)
    rows = tuple(((i, 1), (a.dim + i, -1)) for i in range(a.dim))
    return FaspExpr("linear", a.dim, (concat(a, b),), payload=rows)


def scale(x: FaspExpr, factor: object) -> FaspExpr:
    c = _rat(factor)
    rows = tuple(((i, c),) if c else () for i in range(x.dim))
    return FaspExpr("linear", x.dim, (x,), payload=rows)


def affine(x: FaspExpr, factor: object, shift: object) -> FaspExpr:
    """factor * x + shift, elementwise with scalar factor and shift."""
    return add(scale(x, factor), _lift_like(shift, x))


def coords(x: FaspExpr, start: int, stop: int) -> FaspExpr:
    """The slice [start, stop) of a vector, as a linear projection."""
    if not 0 <= start < stop <= x.dim:
        raise FaspTypeError(f"slice [{start}, {stop}) outside dimension {x.dim}")
    rows = tuple(((i, 1),) for i in range(start, stop))
    return FaspExpr("linear", stop - start, (x,), payload=rows, boolean=x.boolean)


# ---------------------------------------------------------------------------
# Operator library: pointwise arithmetic, logic, comparisons
# ---------------------------------------------------------------------------


def max_(a: object, b: object) -> FaspExpr:
    """Elementwise maximum: [a - b]_+ + b."""
    a, b = _pair(a, b)
    return add(relu(minus(a, b)), b)


def min_(a: object, b: object) -> FaspExpr:
    """Elementwise minimum: a - [a - b]_+."""
    a, b = _pair(a, b)
    return minus(a, relu(minus(a, b)))


def not_(a: FaspExpr) -> FaspExpr:
    """Boolean negation 1 - a."""
    return _boolean(minus(_lift_like(1, a), a))


def and_(a: object, b: object) -> FaspExpr:
    """Boolean conjunction, as an elementwise minimum."""
    return _boolean(min_(a, b))


def or_(a: object, b: object) -> FaspExpr:
    """Boolean disjunction, by De Morgan from and/not."""
    a, b = _pair(a, b)
    return _boolean(not_(and_(not_(a), not_(b))))


def xor(a: object, b: object) -> FaspExpr:
    a, b = _pair(a, b)
    return _boolean(and_(or_(a, b), not_(and_(a, b))))


def leq(a: object, b: object) -> FaspExpr:
    """Elementwise a <= b on integer-valued arguments: [b-a+1]_+ - [b-a]_+."""
    a, b = _pair(a, b)
    diff = minus(b, a)
    return _boolean(minus(relu(add(diff, 1)), relu(diff)))


def geq(a: object, b: object) -> FaspExpr:
    a, b = _pair(a, b)
    return leq(b, a)


def less(a: object, b: object) -> FaspExpr:
    a, b = _pair(a, b)
    return leq(a, minus(b, 1))


def greater(a: object, b: object) -> FaspExpr:
    a, b = _pair(a, b)
    return less(b, a)


def equal(a: object, b: object) -> FaspExpr:
    """Scalar test that two integer-valued vectors agree in every coordinate."""
    a, b = _pair(a, b)
    eq_vec = and_(leq(a, b), geq(a, b))
    return _fold_and(eq_vec)


def neq(a: object, b: object) -> FaspExpr:
    return not_(equal(a, b))


def _fold_and(vec: FaspExpr) -> FaspExpr:
    if vec.dim == 1:
        return _boolean(vec)
    acc = coords(vec, 0, 1)
    for i in range(1, vec.dim):
        acc = and_(acc, coords(vec, i, i + 1))
    return acc


def kron(a: FaspExpr, b: FaspExpr) -> FaspExpr:
    """One-hot outer product: coordinate (i, j) of the result is a_i AND b_j."""
    if not isinstance(a, FaspExpr) or not isinstance(b, FaspExpr):
        raise FaspTypeError("kron needs two FaspExpr arguments")
    d1, d2 = a.dim, b.dim
    rep_rows = tuple(((r // d2, 1),) for r in range(d1 * d2))
    tile_rows = tuple(((r % d2, 1),) for r in range(d1 * d2))
    repeated = FaspExpr("linear", d1 * d2, (a,), payload=rep_rows)
    tiled = FaspExpr("linear", d1 * d2, (b,), payload=tile_rows)
    return and_(repeated, tiled)


# ---------------------------------------------------------------------------
# Operator library: running aggregates and positional predicates
# ---------------------------------------------------------------------------

_SEQ_LEN = positional_feature("seq_len")
_IS_FIRST = positional_feature("is_first")
_INV_SEQ_LEN: FaspExpr | None = None


def average(x: FaspExpr) -> FaspExpr:
    """Running mean of x over all prefixes (constant-query attention)."""
    return aha(const(1), const(1), x)


def sum_(x: FaspExpr) -> FaspExpr:
    """Running sum of x over all prefixes: average times sequence length."""
    return multiply(average(x), _SEQ_LEN)


def seq_max(x: FaspExpr) -> FaspExpr:
    """Running maximum of a scalar.

    The constant query makes the attention score at prefix j equal x's value
    there, so every argmax position carries the maximum itself and the
    hard-attention average returns it exactly — including for negative values,
    where a self-query would chase the most negative entry instead.
    """
    if x.dim != 1:
        raise FaspTypeError("running max/min need a scalar argument")
    return aha(const(1), x, x)


def seq_min(x: FaspExpr) -> FaspExpr:
    """Running minimum of a scalar, as the negated maximum of the negation."""
    return scale(seq_max(scale(x, -1)), -1)


def seq_and(x: FaspExpr) -> FaspExpr:
    """Running conjunction of a boolean scalar (its running minimum)."""
    return _boolean(seq_min(x))


def seq_or(x: FaspExpr) -> FaspExpr:
    """Running disjunction of a boolean scalar (its running maximum)."""
    return _boolean(seq_max(x))


def inv_seq_len() -> FaspExpr:
    """1/n at length n: the running mean of the first-position indicator.

    Shared as a singleton so every augmented-attention user hits one memo
    entry per position.
    """
    global _INV_SEQ_LEN
    if _INV_SEQ_LEN is None:
        _INV_SEQ_LEN = average(_IS_FIRST)
    return _INV_SEQ_LEN


def is_pos_k(k: int) -> FaspExpr:
    """Indicator that the current length is exactly k.

    Built from 1/n alone: both k+1 - k(k+1)/n and its negation-shifted twin
    are >= 0 exactly at n = k and <= -1 elsewhere, where the threshold gadget
    [x+1]_+ - [x]_+ turns them into clean {0,1} values.
    """
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise FaspTypeError("is_pos_k needs a positive integer position")
    inv = inv_seq_len()
    first = _geq0(affine(inv, -k * (k + 1), k + 1))
    second = _geq0(affine(inv, k * (k + 1), -(k + 1)))
    return and_(first, second)


def _geq0(x: FaspExpr) -> FaspExpr:
    """[x+1]_+ - [x]_+: 1 for x >= 0, 0 for x <= -1 (undefined between)."""
    return _boolean(minus(relu(add(x, 1)), relu(x)))


# ---------------------------------------------------------------------------
# Operator library: retrieval
# ---------------------------------------------------------------------------


def if_then_else(cond: FaspExpr, when_true: object, when_false: object) -> FaspExpr:
    """Select between two equal-dimension values by a scalar {0,1} condition."""
    if not isinstance(cond, FaspExpr) or cond.dim != 1:
        raise FaspTypeError("the condition must be a scalar expression")
    when_true, when_false = _pair(when_true, when_false)
    return add(
        multiply(cond, when_true), multiply(not_(cond), when_false)
    )


def rha(query: FaspExpr, key: FaspExpr, value: FaspExpr) -> FaspExpr:
    """Hard attention that breaks score ties toward the most recent position.

    The query gains a constant-1 coordinate paired against -1/j on the key
    side.  The perturbation lies in (-1, 0], so it never reorders distinct
    integer base scores, and among equal base scores the largest j wins.
    Query and key must therefore be integer-valued.
    """
    if query.dim != key.dim:
        raise FaspTypeError(
            f"query dimension {query.dim} != key dimension {key.dim}"
        )
    return aha(
        concat(query, const(1)),
        concat(key, scale(inv_seq_len(), -1)),
        value,
    )


def rightmost_best_match(query: FaspExpr, key: FaspExpr, value: FaspExpr) -> FaspExpr:
    """Retrieve the value at the most recent position minimizing ||query - key||.

    Maximizing 2 q.k - k.k over positions is minimizing the squared distance;
    the rha wrapper supplies the rightmost tie-break.
    """
    if query.dim != key.dim:
        raise FaspTypeError(
            f"query dimension {query.dim} != key dimension {key.dim}"
        )
    norm2 = linear([[1] * key.dim], square(key))
    return rha(
        concat(query, const(1)),
        concat(scale(key, 2), scale(norm2, -1)),
        value,
    )


def rightmost_exact_match(
    query: FaspExpr, key: FaspExpr, value: FaspExpr, default: object
) -> FaspExpr:
    """Value at the most recent position whose key equals the query, else default.

    One retrieval fetches the best-matching key and its value together; the
    key half then gates between the fetched value and the default.
    """
    if not isinstance(value, FaspExpr):
        _bad(value)
    if not isinstance(default, FaspExpr):
        default = _lift_like(default, value)
    fetched = rightmost_best_match(query, key, concat(key, value))
    got_key = coords(fetched, 0, key.dim)
    got_value = coords(fetched, key.dim, key.dim + value.dim)
    return if_then_else(equal(got_key, query), got_value, default)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _div(total: Rational, count: int) -> Rational:
    if count == 1:
        return total
    if isinstance(total, int):
        quot, rem = divmod(total, count)
        return quot if rem == 0 else Fraction(total, count)
    return total / count


class EvalSession:
    """Memoized exact evaluation of expressions over one token sequence.

    Values are cached per (node, prefix length), so appending tokens keeps all
    previous work; replacing the sequence (:meth:`reset`) starts over.  With
    ``check_booleans=True`` every boolean-marked node is verified to produce
    only {0, 1} values.
    """

    def __init__(
        self, tokens: Sequence[Hashable] = (), *, check_booleans: bool = False
    ) -> None:
        self._tokens: list = list(tokens)
        self._memo: dict[tuple[int, int], tuple[Rational, ...]] = {}
        self._pins: dict[int, FaspExpr] = {}
        self.check_booleans = check_booleans

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> tuple:
        return tuple(self._tokens)

    def append(self, token: Hashable) -> None:
        """Extend the sequence; cached prefix values stay valid."""
        self._tokens.append(token)

    def extend(self, tokens: Iterable[Hashable]) -> None:
        self._tokens.extend(tokens)

    def reset(self, tokens: Sequence[Hashable]) -> None:
        """Replace the sequence and drop the cache."""
        self._tokens = list(tokens)
        self._memo.clear()
        self._pins.clear()

    def value(self, expr: FaspExpr, pos: int | None = None) -> tuple[Rational, ...]:
        """Evaluate ``expr`` on the prefix of length ``pos`` (default: full)."""
        if not isinstance(expr, FaspExpr):
            _bad(expr)
        n = len(self._tokens)
        if pos is None:
            pos = n
        if n == 0 or not 1 <= pos <= n:
            raise ValueError(
                f"evaluation needs a non-empty prefix: length {pos} of {n}"
            )
        return self._eval(expr, pos)

    def _eval(self, expr: FaspExpr, pos: int) -> tuple[Rational, ...]:
        key = (id(expr), pos)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        kind = expr.kind
        if kind == "token":
            table, fallback = expr.payload
            tok = self._tokens[pos - 1]
            out = table.get(tok, fallback)
            if out is None:
                raise FaspTypeError(f"no embedding for token {tok!r}")
        elif kind == "pos":
            feature = expr.payload
            if feature == "zero":
                out = (0,)
            elif feature == "is_first":
                out = (1,) if pos == 1 else (0,)
            else:
                out = (pos,)
        elif kind == "concat":
            parts: list[Rational] = []
            for child in expr.children:
                parts.extend(self._eval(child, pos))
            out = tuple(parts)
        elif kind == "linear":
            vec = self._eval(expr.children[0], pos)
            out = tuple(
                sum(c * vec[i] for i, c in row) if row else 0
                for row in expr.payload
            )
        elif kind == "aha":
            q_expr, k_expr, v_expr = expr.children
            query = self._eval(q_expr, pos)
            best = None
            hits: list[int] = []
            for j in range(1, pos + 1):
                key_j = self._eval(k_expr, j)
                score: Rational = 0
                for a, b in zip(query, key_j):
                    if a and b:
                        score += a * b
                if best is None or score > best:
                    best = score
                    hits = [j]
                elif score == best:
                    hits.append(j)
            if len(hits) == 1:
                out = self._eval(v_expr, hits[0])
            else:
                count = len(hits)
                picked = [self._eval(v_expr, j) for j in hits]
                out = tuple(_div(sum(col), count) for col in zip(*picked))
        elif kind == "act":
            name = expr.payload
            first = self._eval(expr.children[0], pos)
            if name == "relu":
                out = tuple(x if x > 0 else 0 for x in first)
            elif name == "square":
                out = tuple(x * x for x in first)
            else:
                second = self._eval(expr.children[1], pos)
                if name == "reglu":
                    second = tuple(y if y > 0 else 0 for y in second)
                if len(first) == len(second):
                    out = tuple(x * y for x, y in zip(first, second))
                elif len(first) == 1:
                    out = tuple(first[0] * y for y in second)
                else:
                    out = tuple(x * second[0] for x in first)
        else:  # pragma: no cover - constructors admit no other kind
            raise FaspTypeError(f"unknown node kind {expr.kind!r}")
        if self.check_booleans and expr.boolean:
            for x in out:
                if x != 0 and x != 1:
                    raise FaspTypeError(
                        f"boolean-marked {expr!r} evaluated to {out} "
                        f"at position {pos}"
                    )
        self._pins[id(expr)] = expr
        self._memo[key] = out
        return out


def evaluate(
    expr: FaspExpr, seq: Sequence[Hashable], *, check_booleans: bool = False
) -> tuple[Rational, ...]:
    """Evaluate one expression on one sequence (fresh session)."""
    return EvalSession(seq, check_booleans=check_booleans).value(expr)


eval = evaluate  # noqa: A001 - the operation's contract name


def hardmax(values: Sequence[object]) -> tuple[Rational, ...]:
    """Uniform distribution over the maximizing coordinates, exactly."""
    vec = _vec(values)
    top = max(vec)
    count = vec.count(top)
    weight: Rational = 1 if count == 1 else Fraction(1, count)
    return tuple(weight if v == top else 0 for v in vec)


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Program:
    """Named definitions plus a result decoded over a fixed vocabulary.

    Definitions are ordered bottom-up (each references only earlier ones,
    token embeddings, or positional features — enforced by construction since
    expressions are immutable DAGs).  The result's dimension must equal the
    vocabulary size; its unique argmax coordinate names the next token.
    """

    definitions: tuple[tuple[str, FaspExpr], ...]
    result: FaspExpr
    vocabulary: tuple[Hashable, ...]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.definitions]
        if len(set(names)) != len(names):
            raise FaspTypeError("definition names must be distinct")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise FaspTypeError("vocabulary tokens must be distinct")
        if self.result.dim != len(self.vocabulary):
            raise FaspTypeError(
                f"result dimension {self.result.dim} != vocabulary size "
                f"{len(self.vocabulary)}"
            )

    def definition(self, name: str) -> FaspExpr:
        for def_name, expr in self.definitions:
            if def_name == name:
                return expr
        raise KeyError(name)


def next_token(
    program: Program,
    seq: Sequence[Hashable] | None = None,
    *,
    session: EvalSession | None = None,
    check_booleans: bool = False,
) -> Hashable:
    """Decode the program's next token by unique argmax of the result.

    Pass either a sequence (evaluated in a fresh session) or a live session
    (for incremental generation).  A tied argmax raises
    :class:`AmbiguousDecode` rather than guessing.
    """
    if session is None:
        if seq is None:
            raise ValueError("next_token needs a sequence or a session")
        session = EvalSession(seq, check_booleans=check_booleans)
    out = session.value(program.result)
    top = max(out)
    hits = [i for i, v in enumerate(out) if v == top]
    if len(hits) != 1:
        tied = ", ".join(repr(program.vocabulary[i]) for i in hits[:4])
        raise AmbiguousDecode(f"decode tied between {tied}")
    return program.vocabulary[hits[0]]


def format_program(program: Program) -> str:
    """Human-readable topological dump of every reachable node.

    Stable across runs for the same program, so dumps can be diffed.
    """
    names = {id(expr): name for name, expr in program.definitions}
    order: list[FaspExpr] = []
    seen: set[int] = set()

    def visit(expr: FaspExpr) -> None:
        if id(expr) in seen:
            return
        seen.add(id(expr))
        for child in expr.children:
            visit(child)
        order.append(expr)

    for _, expr in program.definitions:
        visit(expr)
    visit(program.result)
    number = {id(expr): i for i, expr in enumerate(order)}

    def describe(expr: FaspExpr) -> str:
        refs = " ".join(f"%{number[id(c)]}" for c in expr.children)
        if expr.kind == "token":
            table, fallback = expr.payload
            if not table and fallback is not None:
                return f"const{fallback!r}"
            body = ", ".join(
                f"{tok!r}: {vec!r}"
                for tok, vec in sorted(table.items(), key=lambda kv: repr(kv[0]))
            )
            tail = f", default={fallback!r}" if fallback is not None else ""
            if len(body) > 200:
                return f"token_embedding(<{len(table)} tokens>{tail})"
            return f"token_embedding({{{body}}}{tail})"
        if expr.kind == "pos":
            return f"positional({expr.payload})"
        if expr.kind == "concat":
            return f"concat {refs}"
        if expr.kind == "linear":
            entries = sum(len(row) for row in expr.payload)
            if entries <= 16:
                body = "; ".join(
                    " ".join(f"{c}@{i}" for i, c in row) or "0"
                    for row in expr.payload
                )
                return f"linear[{body}] {refs}"
            return f"linear<{len(expr.payload)}x{expr.children[0].dim}, {entries} entries> {refs}"
        if expr.kind == "aha":
            return f"aha {refs}"
        return f"{expr.payload} {refs}"

    lines = [f"vocabulary ({len(program.vocabulary)}): {list(program.vocabulary)!r}"]
    for expr in order:
        name = names.get(id(expr))
        label = f"%{number[id(expr)]}" + (f" = {name}" if name else "")
        flag = " [boolean]" if expr.boolean else ""
        lines.append(f"{label}: dim {expr.dim}{flag} <- {describe(expr)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# The machine-simulation program
# ---------------------------------------------------------------------------


def build_tm_program(spec: TMSpec) -> Program:
    """Next-token program replicating :func:`pencil.turing.run_pencil_tm`.

    The vocabulary is every update token (state, non-blank symbol, move) plus
    ``[SEP]`` and ``[RETURN]``.  While the context holds no ``[SEP]``, the
    program replays the update history to track head position and tape
    contents, applies the transition table, and watches for the moment the
    context reaches twice the serialized-configuration length — then it emits
    ``[SEP]``, streams out the serialization one update token per step, and
    finishes with ``[RETURN]`` (the caller is expected to apply the reduction
    rule before asking for more tokens).
    """
    states = spec.states
    alphabet = spec.alphabet
    moves = MOVES
    update_tokens = tuple(
        UpdateToken(q, a, d) for q in states for a in spec.symbols() for d in moves
    )
    vocabulary: tuple[Hashable, ...] = (*update_tokens, SEP, RETURN)
    token_index = {tok: i for i, tok in enumerate(vocabulary)}

    state_of = {q: i for i, q in enumerate(states)}
    symbol_of = {a: i for i, a in enumerate(alphabet)}
    move_of = {d: i for i, d in enumerate(moves)}

    def one_hot(index: int, dim: int) -> tuple[int, ...]:
        return tuple(1 if i == index else 0 for i in range(dim))

    state_table: dict[Hashable, tuple[int, ...]] = {}
    symbol_table: dict[Hashable, tuple[int, ...]] = {}
    move_table: dict[Hashable, tuple[int, ...]] = {}
    update_table: dict[Hashable, tuple[int, ...]] = {}
    for tok in update_tokens:
        state_table[tok] = one_hot(state_of[tok.state], len(states))
        symbol_table[tok] = one_hot(symbol_of[tok.symbol], len(alphabet))
        move_table[tok] = (tok.move,)
        update_table[tok] = (1,)
    for special in (SEP, RETURN):
        state_table[special] = (0,) * len(states)
        symbol_table[special] = (0,) * len(alphabet)
        move_table[special] = (0,)
        update_table[special] = (0,)

    get_state = token_embedding(state_table)
    get_symbol = token_embedding(symbol_table)
    get_move = token_embedding(move_table)
    is_update = token_embedding(update_table, boolean=True)
    is_sep = token_embedding(
        {tok: (1 if tok == SEP else 0,) for tok in vocabulary}, boolean=True
    )

    exist_sep = seq_or(is_sep)
    sim_phase_mask = not_(exist_sep)
    sum_phase_mask = and_(exist_sep, not_(is_sep))

    # Head tracking.  Moves are gated multiplicatively (a move of -1 under a
    # zero mask must contribute 0, which a logical minimum would not give),
    # so both counters freeze once [SEP] appears.
    sim_move = multiply(get_move, sim_phase_mask)
    next_sim_pos = sum_(sim_move)
    current_sim_pos = minus(next_sim_pos, sim_move)

    # Tape extent must also freeze: positions after [SEP] still carry the
    # final head position in the (frozen) counters, which would leak into the
    # running max/min and into position matching.  |counter| <= position
    # index, so shifting masked positions by 2n+2 pushes them strictly
    # outside the live range in either direction.
    guard = multiply(affine(_SEQ_LEN, 2, 2), exist_sep)
    lowered = minus(current_sim_pos, guard)
    raised = add(current_sim_pos, guard)
    max_pos = seq_max(lowered)
    min_pos = seq_min(raised)
    expected_sum_len = add(
        add(minus(max_pos, min_pos), relu(minus(minus(max_pos, next_sim_pos), 1))),
        1,
    )

    # Simulation: read the cell under the head (most recent write at that
    # position, blank if never written), then apply the transition table.
    blank_vec = one_hot(symbol_of[spec.blank], len(alphabet))
    current_symbol = rightmost_exact_match(
        next_sim_pos, raised, get_symbol, const(blank_vec)
    )
    pair = kron(get_state, current_symbol)
    delta_rows = [[0] * (len(states) * len(alphabet)) for _ in vocabulary]
    for (q, a), (q2, a2, d2) in spec.transitions.items():
        column = state_of[q] * len(alphabet) + symbol_of[a]
        delta_rows[token_index[UpdateToken(q2, a2, d2)]][column] = 1
    simulation_step = linear(delta_rows, pair)

    end_simulation = geq(_SEQ_LEN, scale(expected_sum_len, 2))
    simulation = if_then_else(
        end_simulation,
        const(one_hot(token_index[SEP], len(vocabulary))),
        simulation_step,
    )

    # Summarization: emit the serialization of the frozen configuration.
    current_sum_pos = sum_(multiply(get_move, sum_phase_mask))
    current_sum_len = sum_(sum_phase_mask)

    # Right after [SEP] the last token carries no state, so the control state
    # comes from the most recent update token instead of the final token.
    control_state = rha(const(1), is_update, get_state)

    # Serialization move for the upcoming token (position current_sum_len + 1
    # in the serialization): sweep right across the span, then land the head.
    emit_index = add(current_sum_len, 1)
    span = minus(max_pos, min_pos)
    at_span_end = equal(emit_index, add(span, 1))
    head_past_max = equal(next_sim_pos, add(max_pos, 1))
    head_at_max = equal(next_sim_pos, max_pos)
    next_move = if_then_else(
        leq(emit_index, span),
        const(1),
        if_then_else(
            and_(at_span_end, head_past_max),
            const(1),
            if_then_else(and_(at_span_end, head_at_max), const(0), const(-1)),
        ),
    )
    move_one_hot = concat(*(equal(next_move, d) for d in moves))

    # The serialization walks cells left-to-right from min_pos; every cell in
    # the span was written, so the best (distance-0, most recent) match is
    # the cell's final symbol.
    summary_symbol = rightmost_best_match(
        add(current_sum_pos, min_pos), raised, get_symbol
    )
    triple = kron(kron(control_state, summary_symbol), move_one_hot)
    emit_rows = [[0] * (len(states) * len(alphabet) * 3) for _ in vocabulary]
    for tok in update_tokens:
        column = (
            state_of[tok.state] * len(alphabet) + symbol_of[tok.symbol]
        ) * 3 + move_of[tok.move]
        emit_rows[token_index[tok]][column] = 1
    summary_step = linear(emit_rows, triple)

    end_summary = equal(current_sum_len, expected_sum_len)
    summary = if_then_else(
        end_summary,
        const(one_hot(token_index[RETURN], len(vocabulary))),
        summary_step,
    )

    result = if_then_else(exist_sep, summary, simulation)

    definitions = (
        ("is_sep", is_sep),
        ("exist_sep", exist_sep),
        ("sim_phase_mask", sim_phase_mask),
        ("sum_phase_mask", sum_phase_mask),
        ("next_sim_pos", next_sim_pos),
        ("current_sim_pos", current_sim_pos),
        ("max_pos", max_pos),
        ("min_pos", min_pos),
        ("expected_sum_len", expected_sum_len),
        ("current_symbol", current_symbol),
        ("simulation_step", simulation_step),
        ("end_simulation", end_simulation),
        ("simulation", simulation),
        ("current_sum_pos", current_sum_pos),
        ("current_sum_len", current_sum_len),
        ("control_state", control_state),
        ("next_move", next_move),
        ("summary_symbol", summary_symbol),
        ("summary_step", summary_step),
        ("end_summary", end_summary),
        ("summary", summary),
        ("result", result),
    )
    return Program(definitions=definitions, result=result, vocabulary=vocabulary)


def check_tm_equivalence(
    spec: TMSpec,
    input_symbols: Sequence[str],
    step_cap: int,
    *,
    program: Program | None = None,
    check_booleans: bool = False,
) -> PencilTMRun:
    """Replay a summarizing machine run token-by-token through its program.

    The reference stream comes from the machine runtime; at every generation
    step — update tokens, ``[SEP]``, summary tokens, and ``[RETURN]`` alike —
    the program's next-token prediction must equal the reference token. The
    evaluation session is re-seeded with the reduced context after each
    ``[RETURN]``, mirroring what an erased KV cache would see. Returns the
    reference run; raises :class:`EquivalenceError` at the first disagreeing
    step (decode ties surface as :class:`AmbiguousDecode`). Pass ``program``
    to reuse one compiled program across many inputs.
    """
    if program is None:
        program = build_tm_program(spec)
    run = run_pencil_tm(spec, input_symbols, step_cap=step_cap)
    ctx = list(encode_input(spec, input_symbols))
    session = EvalSession(ctx, check_booleans=check_booleans)
    for pos, reference in enumerate(run.generated):
        predicted = next_token(program, session=session)
        if predicted != reference:
            raise EquivalenceError(
                f"generation step {pos}: program predicted {predicted!r}, "
                f"machine wrote {reference!r}"
            )
        ctx.append(reference)
        session.append(reference)
        if reference == RETURN:
            ctx = reduce_simplified(ctx)
            session.reset(ctx)
    return run
