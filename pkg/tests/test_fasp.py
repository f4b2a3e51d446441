"""Interpreter exactness, operator library semantics, and machine-program parity."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from pencil.core import RETURN, SEP
from pencil.fasp import (
    AmbiguousDecode,
    EquivalenceError,
    EvalSession,
    FaspExpr,
    FaspTypeError,
    Program,
    activation,
    add,
    aha,
    and_,
    average,
    build_tm_program,
    check_tm_equivalence,
    concat,
    const,
    equal,
    evaluate,
    format_program,
    geq,
    greater,
    hardmax,
    if_then_else,
    inv_seq_len,
    is_pos_k,
    kron,
    leq,
    less,
    linear,
    max_,
    min_,
    minus,
    multiply,
    neq,
    next_token,
    not_,
    or_,
    positional_feature,
    reglu,
    relu,
    rha,
    rightmost_best_match,
    rightmost_exact_match,
    scale,
    seq_and,
    seq_max,
    seq_min,
    seq_or,
    square,
    sum_,
    token_embedding,
    xor,
)
from pencil.reduction import reduce_simplified
from pencil.turing import (
    TMSpec,
    UpdateToken,
    am_next,
    encode_input,
    gen_tm,
    make_sweeper,
    run_pencil_tm,
    sweeper_input,
)


def immediate_accept() -> TMSpec:
    return TMSpec(
        states=("q0",),
        alphabet=("_", "x"),
        blank="_",
        start="q0",
        transitions={("q0", "_"): ("q0", "x", 0), ("q0", "x"): ("q0", "x", 0)},
        accept=frozenset({"q0"}),
    )


def unary_increment() -> TMSpec:
    return TMSpec(
        states=("q0", "qa"),
        alphabet=("_", "1"),
        blank="_",
        start="q0",
        transitions={
            ("q0", "_"): ("qa", "1", +1),
            ("q0", "1"): ("qa", "1", +1),
            ("qa", "_"): ("qa", "1", 0),
            ("qa", "1"): ("qa", "1", 0),
        },
        accept=frozenset({"qa"}),
    )


def indexed(values: list) -> tuple[FaspExpr, list[int]]:
    """A per-position value function: token j carries ``values[j]``."""
    table = {j: v for j, v in enumerate(values)}
    return token_embedding(table), list(range(len(values)))


ANY = ["t"]  # one-token sequence for evaluating input-independent expressions


class TestPrimitives:
    def test_token_embedding_lookup_and_default(self):
        expr = token_embedding({"a": (1, 2), "b": (3, 4)}, default=(0, 0))
        session = EvalSession(["a", "b", "c"])
        assert session.value(expr, 1) == (1, 2)
        assert session.value(expr, 2) == (3, 4)
        assert session.value(expr, 3) == (0, 0)

    def test_token_embedding_without_default_rejects_unknown_tokens(self):
        expr = token_embedding({"a": 1})
        with pytest.raises(FaspTypeError, match="no embedding"):
            evaluate(expr, ["z"])

    def test_token_embedding_construction_errors(self):
        with pytest.raises(FaspTypeError, match="disagree"):
            token_embedding({"a": (1,), "b": (1, 2)})
        with pytest.raises(FaspTypeError, match="default"):
            token_embedding({})
        with pytest.raises(FaspTypeError, match="rational"):
            token_embedding({"a": 0.5})

    def test_positional_features(self):
        session = EvalSession(list("abcd"))
        zero = positional_feature("zero")
        first = positional_feature("is_first")
        length = positional_feature("seq_len")
        assert [session.value(zero, p) for p in range(1, 5)] == [(0,)] * 4
        assert [session.value(first, p) for p in range(1, 5)] == [(1,), (0,), (0,), (0,)]
        assert [session.value(length, p) for p in range(1, 5)] == [(1,), (2,), (3,), (4,)]
        with pytest.raises(FaspTypeError, match="positional feature"):
            positional_feature("index")

    def test_concat_and_linear_are_exact(self):
        x = const(2, -3)
        y = const(Fraction(1, 3))
        both = concat(x, y)
        assert evaluate(both, ANY) == (2, -3, Fraction(1, 3))
        mapped = linear([[1, 0, 3], [0, Fraction(1, 2), 0]], both)
        assert evaluate(mapped, ANY) == (3, Fraction(-3, 2))

    def test_linear_row_width_must_match(self):
        with pytest.raises(FaspTypeError, match="row width"):
            linear([[1, 2, 3]], const(1, 2))

    def test_aha_attends_to_maximal_scores(self):
        keys, seq = indexed([(0,), (5,), (1,), (5,)])
        values, _ = indexed([(10,), (20,), (30,), (40,)])
        out = aha(const(1), keys, values)
        # positions 2 and 4 tie at score 5: exact average of their values
        assert evaluate(out, seq) == (30,)

    def test_aha_query_key_dimensions_must_match(self):
        with pytest.raises(FaspTypeError, match="query dimension"):
            aha(const(1, 2), const(1), const(9))

    def test_activations(self):
        assert evaluate(relu(const(-2, 0, 5)), ANY) == (0, 0, 5)
        assert evaluate(square(const(-3, Fraction(1, 2))), ANY) == (9, Fraction(1, 4))
        assert evaluate(multiply(const(2, 3), const(4, 5)), ANY) == (8, 15)
        assert evaluate(multiply(const(2), const(4, 5)), ANY) == (8, 10)
        assert evaluate(reglu(const(3, 3), const(-1, 2)), ANY) == (0, 6)

    def test_activation_construction_errors(self):
        with pytest.raises(FaspTypeError, match="unknown activation"):
            activation("tanh", const(1))
        with pytest.raises(FaspTypeError, match="exactly one"):
            activation("relu", const(1), const(2))
        with pytest.raises(FaspTypeError, match="scalar side"):
            multiply(const(1, 2), const(1, 2, 3))

    def test_evaluation_requires_nonempty_prefix(self):
        with pytest.raises(ValueError, match="non-empty"):
            evaluate(const(1), [])
        session = EvalSession(["a"])
        with pytest.raises(ValueError, match="non-empty"):
            session.value(const(1), 2)


class TestHardmax:
    def test_tied_maximum_splits_mass(self):
        assert hardmax([1, 3, 3]) == (0, Fraction(1, 2), Fraction(1, 2))

    def test_singleton(self):
        assert hardmax([5]) == (1,)

    def test_all_equal_is_uniform(self):
        assert hardmax([2, 2, 2, 2]) == (Fraction(1, 4),) * 4


class TestSessions:
    def test_append_extends_reset_discards(self):
        running = sum_(linear([[1]], token_embedding({"a": 1, "b": 10})))
        session = EvalSession(["a", "a"])
        assert session.value(running) == (2,)
        session.append("b")
        assert session.value(running) == (12,)
        assert session.value(running, 2) == (2,)
        session.reset(["b", "b"])
        assert session.value(running) == (20,)

    def test_repeated_evaluation_is_bit_identical(self):
        vals, seq = indexed([(1,), (2,), (4,)])
        expr = average(vals)
        first = evaluate(expr, seq)
        second = evaluate(expr, seq)
        assert first == second
        assert [type(v) for v in first] == [type(v) for v in second]
        assert first == (Fraction(7, 3),)

    def test_boolean_checking_flags_fractional_values(self):
        # a <= comparison applied outside its integer domain leaks 1/2
        lie = leq(const(Fraction(1, 2)), const(0))
        assert evaluate(lie, ANY) == (Fraction(1, 2),)
        with pytest.raises(FaspTypeError, match="boolean"):
            evaluate(lie, ANY, check_booleans=True)


class TestArithmeticOperators:
    def test_add_minus_match_python(self):
        rng = random.Random(1)
        for _ in range(25):
            dim = rng.randint(1, 3)
            a = tuple(rng.randint(-5, 5) for _ in range(dim))
            b = tuple(rng.randint(-5, 5) for _ in range(dim))
            assert evaluate(add(const(a), const(b)), ANY) == tuple(
                x + y for x, y in zip(a, b)
            )
            assert evaluate(minus(const(a), const(b)), ANY) == tuple(
                x - y for x, y in zip(a, b)
            )

    def test_elementwise_max_min_match_python(self):
        rng = random.Random(2)
        for _ in range(25):
            dim = rng.randint(1, 3)
            a = tuple(rng.randint(-5, 5) for _ in range(dim))
            b = tuple(rng.randint(-5, 5) for _ in range(dim))
            assert evaluate(max_(const(a), const(b)), ANY) == tuple(
                max(x, y) for x, y in zip(a, b)
            )
            assert evaluate(min_(const(a), const(b)), ANY) == tuple(
                min(x, y) for x, y in zip(a, b)
            )

    def test_literal_lifting_and_scale(self):
        x = const(3, -1)
        assert evaluate(add(x, 1), ANY) == (4, 0)
        assert evaluate(minus(x, 1), ANY) == (2, -2)
        assert evaluate(scale(x, Fraction(1, 2)), ANY) == (Fraction(3, 2), Fraction(-1, 2))

    def test_dimension_mismatch_is_a_construction_error(self):
        with pytest.raises(FaspTypeError, match="mismatch"):
            add(const(1, 2), const(1, 2, 3))


class TestBooleanOperators:
    def test_truth_tables(self):
        for a in (0, 1):
            for b in (0, 1):
                pair = (const(a), const(b))
                assert evaluate(and_(*pair), ANY) == (a & b,)
                assert evaluate(or_(*pair), ANY) == (a | b,)
                assert evaluate(xor(*pair), ANY) == (a ^ b,)
            assert evaluate(not_(const(a)), ANY) == (1 - a,)

    def test_comparisons_exhaustively_on_small_integers(self):
        for a in range(-3, 4):
            for b in range(-3, 4):
                ca, cb = const(a), const(b)
                assert evaluate(leq(ca, cb), ANY) == (int(a <= b),)
                assert evaluate(geq(ca, cb), ANY) == (int(a >= b),)
                assert evaluate(less(ca, cb), ANY) == (int(a < b),)
                assert evaluate(greater(ca, cb), ANY) == (int(a > b),)
                assert evaluate(equal(ca, cb), ANY) == (int(a == b),)
                assert evaluate(neq(ca, cb), ANY) == (int(a != b),)

    def test_leq_boundary_case(self):
        assert evaluate(leq(const(2), const(2)), ANY) == (1,)

    def test_vector_equality_folds_all_coordinates(self):
        assert evaluate(equal(const(1, 2, 3), const(1, 2, 3)), ANY) == (1,)
        assert evaluate(equal(const(1, 2, 3), const(1, 9, 3)), ANY) == (0,)
        assert evaluate(neq(const(1, 2), const(2, 1)), ANY) == (1,)

    def test_kron_of_one_hots(self):
        for i in range(2):
            for j in range(3):
                left = const(tuple(int(c == i) for c in range(2)))
                right = const(tuple(int(c == j) for c in range(3)))
                expected = tuple(int(r == i * 3 + j) for r in range(6))
                assert evaluate(kron(left, right), ANY) == expected


class TestRunningAggregates:
    def test_against_brute_force_on_every_prefix(self):
        rng = random.Random(3)
        for _ in range(10):
            raw = [rng.randint(-6, 6) for _ in range(rng.randint(1, 7))]
            vals, seq = indexed([(v,) for v in raw])
            session = EvalSession(seq)
            ops = {
                average(vals): lambda p: Fraction(sum(raw[:p]), p),
                sum_(vals): lambda p: sum(raw[:p]),
                seq_max(vals): lambda p: max(raw[:p]),
                seq_min(vals): lambda p: min(raw[:p]),
            }
            for expr, ref in ops.items():
                for p in range(1, len(raw) + 1):
                    got = session.value(expr, p)[0]
                    assert got == ref(p), (raw, p)

    def test_running_max_of_all_negative_values(self):
        vals, seq = indexed([(-3,), (-1,), (-2,)])
        session = EvalSession(seq)
        assert [session.value(seq_max(vals), p)[0] for p in (1, 2, 3)] == [-3, -1, -1]
        assert [session.value(seq_min(vals), p)[0] for p in (1, 2, 3)] == [-3, -3, -3]

    def test_running_logic(self):
        raw = [1, 1, 0, 1]
        vals, seq = indexed([(v,) for v in raw])
        session = EvalSession(seq)
        assert [session.value(seq_and(vals), p)[0] for p in range(1, 5)] == [1, 1, 0, 0]
        assert [session.value(seq_or(vals), p)[0] for p in range(1, 5)] == [1, 1, 1, 1]
        flipped = [session.value(seq_or(not_(vals)), p)[0] for p in range(1, 5)]
        assert flipped == [0, 0, 1, 1]

    def test_average_of_ones_is_one(self):
        assert evaluate(average(const(1)), list("abcdef")[:4]) == (1,)

    def test_sum_of_ones_is_the_length(self):
        for n in range(1, 7):
            assert evaluate(sum_(const(1)), list(range(n))) == (n,)

    def test_inverse_sequence_length(self):
        for n in range(1, 7):
            expected = 1 if n == 1 else Fraction(1, n)
            assert evaluate(inv_seq_len(), list(range(n))) == (expected,)

    def test_position_indicator(self):
        for k in range(1, 5):
            expr = is_pos_k(k)
            for n in range(1, 9):
                got = evaluate(expr, list(range(n)), check_booleans=True)
                assert got == (int(n == k),), (k, n)
        with pytest.raises(FaspTypeError, match="positive integer"):
            is_pos_k(0)


class TestSelection:
    def test_if_then_else_selects_branches(self):
        t, f = const(10, 20), const(30, 40)
        assert evaluate(if_then_else(const(1), t, f), ANY) == (10, 20)
        assert evaluate(if_then_else(const(0), t, f), ANY) == (30, 40)
        with pytest.raises(FaspTypeError, match="scalar"):
            if_then_else(const(1, 1), t, f)

    def test_rightmost_tie_breaking(self):
        keys, seq = indexed([(1,), (3,), (1,), (3,), (2,)])
        values, _ = indexed([(10,), (20,), (30,), (40,), (50,)])
        # query 3 ties the match score at positions 2 and 4; recency wins
        out = rha(const(3), keys, values)
        assert evaluate(out, seq) == (40,)

    def test_rha_matches_brute_force(self):
        rng = random.Random(4)
        for _ in range(20):
            n = rng.randint(1, 7)
            dim = rng.randint(1, 2)
            ks = [tuple(rng.randint(-3, 3) for _ in range(dim)) for _ in range(n)]
            vs = [(rng.randint(-9, 9),) for _ in range(n)]
            q = tuple(rng.randint(-3, 3) for _ in range(dim))
            keys, seq = indexed(ks)
            values, _ = indexed(vs)
            scores = [sum(a * b for a, b in zip(q, k)) for k in ks]
            best = max(
                j for j, s in enumerate(scores) if s == max(scores)
            )
            got = evaluate(rha(const(q), keys, values), seq)
            assert got == vs[best], (ks, vs, q)

    def test_rightmost_best_match_minimizes_distance(self):
        keys, seq = indexed([(0,), (2,), (5,), (2,)])
        values, _ = indexed([(100,), (200,), (300,), (400,)])
        out = rightmost_best_match(const(3), keys, values)
        assert evaluate(out, seq) == (400,)

    def test_rightmost_best_match_matches_brute_force(self):
        rng = random.Random(5)
        for _ in range(20):
            n = rng.randint(1, 7)
            dim = rng.randint(1, 2)
            ks = [tuple(rng.randint(-3, 3) for _ in range(dim)) for _ in range(n)]
            vs = [(rng.randint(-9, 9),) for _ in range(n)]
            q = tuple(rng.randint(-3, 3) for _ in range(dim))
            dists = [sum((a - b) ** 2 for a, b in zip(q, k)) for k in ks]
            best = max(j for j, d in enumerate(dists) if d == min(dists))
            keys, seq = indexed(ks)
            values, _ = indexed(vs)
            got = evaluate(rightmost_best_match(const(q), keys, values), seq)
            assert got == vs[best], (ks, vs, q)

    def test_rightmost_exact_match_hit_and_default(self):
        keys, seq = indexed([(1,), (4,), (1,)])
        values, _ = indexed([(7, 0), (8, 0), (9, 0)])
        hit = rightmost_exact_match(const(1), keys, values, const(0, 0))
        miss = rightmost_exact_match(const(2), keys, values, const(5, 5))
        assert evaluate(hit, seq) == (9, 0)
        assert evaluate(miss, seq) == (5, 5)


class TestPrograms:
    @staticmethod
    def tiny_program() -> Program:
        flag = token_embedding({"a": (1, 0), "b": (0, 1)})
        return Program(
            definitions=(("flag", flag),), result=flag, vocabulary=("a", "b")
        )

    def test_next_token_decodes_unique_argmax(self):
        program = self.tiny_program()
        assert next_token(program, ["a"]) == "a"
        assert next_token(program, ["b"]) == "b"

    def test_next_token_refuses_ties(self):
        tied = token_embedding({"a": (1, 1)})
        program = Program(definitions=(), result=tied, vocabulary=("a", "b"))
        with pytest.raises(AmbiguousDecode, match="tied"):
            next_token(program, ["a"])

    def test_next_token_needs_sequence_or_session(self):
        with pytest.raises(ValueError, match="sequence or a session"):
            next_token(self.tiny_program())

    def test_program_validation(self):
        flag = token_embedding({"a": (1, 0)})
        with pytest.raises(FaspTypeError, match="vocabulary size"):
            Program(definitions=(), result=flag, vocabulary=("a", "b", "c"))
        with pytest.raises(FaspTypeError, match="distinct"):
            Program(
                definitions=(("x", flag), ("x", flag)),
                result=flag,
                vocabulary=("a", "b"),
            )
        with pytest.raises(FaspTypeError, match="distinct"):
            Program(definitions=(), result=flag, vocabulary=("a", "a"))

    def test_definition_lookup(self):
        program = self.tiny_program()
        assert program.definition("flag") is program.result
        with pytest.raises(KeyError):
            program.definition("missing")

    def test_format_program_is_deterministic_and_named(self):
        program = build_tm_program(unary_increment())
        dump = format_program(program)
        assert dump == format_program(program)
        for name in ("is_sep", "exist_sep", "expected_sum_len", "result"):
            assert f" = {name}:" in dump
        assert dump.startswith("vocabulary (")


def replay_run(spec: TMSpec, input_symbols, step_cap: int, check: bool = False):
    """Drive the program next-token-by-next-token against the reference run.

    Returns (reference run, number of reduction boundaries crossed).
    """
    program = build_tm_program(spec)
    run = run_pencil_tm(spec, input_symbols, step_cap=step_cap)
    ctx = list(encode_input(spec, input_symbols))
    session = EvalSession(ctx, check_booleans=check)
    boundaries = 0
    for reference in run.generated:
        assert next_token(program, session=session) == reference
        ctx.append(reference)
        session.append(reference)
        if reference == RETURN:
            ctx = reduce_simplified(ctx)
            session.reset(ctx)
            boundaries += 1
    return run, boundaries


class TestMachineProgram:
    def test_trivial_machines_with_boolean_checking(self):
        run, _ = replay_run(immediate_accept(), ["x"], 50, check=True)
        assert run.verdict == "accept"
        run, _ = replay_run(unary_increment(), ["1", "1"], 50, check=True)
        assert run.verdict == "accept"

    def test_sweeping_machine_crosses_many_reductions(self):
        run, boundaries = replay_run(make_sweeper(4), sweeper_input(3), 400)
        assert run.verdict == "accept"
        assert boundaries == run.reductions > 0

    def test_random_machines_reproduce_the_full_stream(self):
        rng = random.Random(20260817)
        for _ in range(6):
            spec = gen_tm(rng.randrange(2**32))
            for _ in range(4):
                symbols = spec.symbols()
                inp = [rng.choice(symbols) for _ in range(rng.randint(1, 5))]
                run, _ = replay_run(spec, inp, 100)
                assert run.verdict in ("accept", "reject", "timeout")

    def test_first_prediction_is_the_transition_of_the_start_configuration(self):
        rng = random.Random(9)
        for _ in range(5):
            spec = gen_tm(rng.randrange(2**32))
            prompt = encode_input(spec, [spec.symbols()[0]])
            program = build_tm_program(spec)
            predicted = next_token(program, prompt)
            assert predicted == am_next(spec, prompt)
            q2, a2, d2 = spec.transitions[(spec.start, spec.blank)]
            assert predicted == UpdateToken(q2, a2, d2)

    def test_reduced_context_resumes_simulation_phase(self):
        spec = make_sweeper(3)
        program = build_tm_program(spec)
        run = run_pencil_tm(spec, sweeper_input(3), step_cap=300)
        assert run.reductions > 0
        ctx = list(encode_input(spec, sweeper_input(3)))
        for tok in run.generated:
            ctx.append(tok)
            if tok == RETURN:
                ctx = reduce_simplified(ctx)
                break
        session = EvalSession(ctx)
        assert session.value(program.definition("exist_sep")) == (0,)
        assert all(isinstance(t, UpdateToken) for t in ctx)

    def test_vocabulary_covers_all_update_tokens_and_specials(self):
        spec = unary_increment()
        program = build_tm_program(spec)
        vocab = set(program.vocabulary)
        assert SEP in vocab and RETURN in vocab
        assert len(program.vocabulary) == len(vocab)
        for q in spec.states:
            for a in spec.symbols():
                for d in (-1, 0, 1):
                    assert UpdateToken(q, a, d) in vocab


class TestEquivalenceChecker:
    def test_agreeing_machine_returns_its_run(self):
        spec = gen_tm(3)
        run = check_tm_equivalence(spec, ["a"], 40)
        assert run.generated
        assert run == run_pencil_tm(spec, ["a"], step_cap=40)

    def test_program_reuse_across_inputs(self):
        spec = gen_tm(5)
        program = build_tm_program(spec)
        for symbols in (["a"], ["b", "a"], ["a", "a", "b"]):
            check_tm_equivalence(spec, symbols, 30, program=program)

    def test_foreign_program_is_caught(self):
        spec = gen_tm(3)
        foreign = build_tm_program(gen_tm(9))
        with pytest.raises(EquivalenceError, match="generation step"):
            check_tm_equivalence(spec, ["a"], 40, program=foreign)
