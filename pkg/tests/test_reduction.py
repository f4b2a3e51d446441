import random

import pytest

from pencil.core import CALL, END_OF_TEXT, RETURN, SEP
from pencil.reduction import (
    Iteration,
    MalformedSequenceError,
    count_flops,
    find_match,
    flops_without_reduction,
    formula_flops,
    is_reducible,
    reduce_once,
    reduce_simplified,
    reduce_to_quiescence,
    run_pencil,
    scaffold,
    total_flops,
    trace_oracle,
)

C, S, R = CALL, SEP, RETURN


def test_basic_reduction():
    seq = ["ctx", C, "think", "hard", S, "answer", R]
    assert reduce_once(seq) == ["ctx", "answer"]


def test_match_anchors_rightmost():
    # two nested call sites: the inner (rightmost) one is matched
    seq = [C, "a", C, "b", S, "x", R]
    m = find_match(seq)
    assert (m.call, m.sep, m.ret) == (2, 4, 6)
    assert reduce_once(seq) == [C, "a", "x"]


def test_sep_is_last_before_return():
    seq = [C, "a", S, "old", S, "new", R]
    m = find_match(seq)
    assert m.sep == 4
    assert reduce_once(seq) == ["new"]


def test_answer_may_contain_call_tail_recursion():
    # the answer part carries a fresh [CALL]: reducing leaves it open
    seq = ["keep", C, "work", S, C, "next", "phase", R]
    out = reduce_once(seq)
    assert out == ["keep", C, "next", "phase"]
    # a later answer then closes that call
    out2 = reduce_once(out + [S, "done", R])
    assert out2 == ["keep", "done"]


def test_no_match_cases():
    assert find_match([]) is None
    assert find_match(["a", "b"]) is None  # no trailing [RETURN]
    assert find_match([C, "a", R]) is None  # no [SEP]
    assert find_match(["a", S, "b", R]) is None  # no [CALL] before [SEP]
    assert find_match([C, S, "a", R, "b", R]) is None  # interior [RETURN]
    assert not is_reducible(["x"])
    with pytest.raises(MalformedSequenceError):
        reduce_once(["a", S, "b", R])


def test_empty_thought_and_answer():
    assert reduce_once([C, S, R]) == []
    assert reduce_once(["c", C, "t", S, R]) == ["c"]


def test_reduce_simplified():
    assert reduce_simplified(["a", "b", S, "x", "y", R]) == ["x", "y"]
    assert reduce_simplified([S, R]) == []
    with pytest.raises(MalformedSequenceError):
        reduce_simplified(["a", "b", R])
    with pytest.raises(MalformedSequenceError):
        reduce_simplified(["a", S, "b"])


def random_live_sequence(rng: random.Random) -> list[str]:
    """Build a plausibly-shaped live sequence ending in [RETURN]."""
    seq: list[str] = []
    for _ in range(rng.randint(0, 6)):
        seq.append(rng.choice(["tok", "more", C]))
    seq.append(C)
    for _ in range(rng.randint(0, 5)):
        seq.append(rng.choice(["think", "step"]))
    seq.append(S)
    for _ in range(rng.randint(0, 4)):
        seq.append(rng.choice(["ans", C, "val"]))
    seq.append(R)
    return seq


def test_randomized_rule_properties():
    rng = random.Random(0)
    for _ in range(2000):
        seq = random_live_sequence(rng)
        m = find_match(seq)
        assert m is not None
        # uniqueness: no other (call, sep) pair satisfies the anchoring rules
        sep_candidates = [
            i
            for i in range(len(seq) - 1)
            if seq[i] == S and all(t != S and t != R for t in seq[i + 1 : -1])
        ]
        assert sep_candidates == [m.sep]
        call_candidates = [
            i
            for i in range(m.sep)
            if seq[i] == C and C not in seq[i + 1 : m.sep]
        ]
        assert call_candidates == [m.call]
        out = reduce_once(seq)
        # shrinkage: at least the three control tokens disappear
        assert len(out) <= len(seq) - 3
        # determinism
        assert reduce_once(seq) == out
        # quiescence: iterated reduction terminates
        reduce_to_quiescence(seq)


def test_run_pencil_records_iterations_and_reduces():
    prompt = ["p1", "p2"]
    body = [C, "t", S, "a", R, END_OF_TEXT]
    run = run_pencil(trace_oracle(body), prompt)
    assert run.num_reductions == 1
    assert run.final == ("p1", "p2", "a", END_OF_TEXT)
    assert run.final_answer == ("a",)
    assert [it.loss_start for it in run.iterations] == [2, 3]
    assert run.iterations[0].tokens == ("p1", "p2", C, "t", S, "a", R)
    assert run.iterations[1].tokens == ("p1", "p2", "a", END_OF_TEXT)
    assert run.total_generated == len(body)
    # longest live context: prompt + the full first segment
    assert run.max_context == 7


def test_run_pencil_malformed_return():
    with pytest.raises(MalformedSequenceError):
        run_pencil(trace_oracle(["x", R, END_OF_TEXT]), ["p"])


def test_run_pencil_token_budget():
    def loop(_ctx):
        return "t"

    with pytest.raises(RuntimeError):
        run_pencil(loop, ["p"], max_tokens=10)


def test_scaffold_concatenation_identity():
    prompt = ["q"]
    body = [C, "t1", S, C, "t2", S, "a2", R, "a1", R, END_OF_TEXT]
    run = scaffold(prompt, body)
    rebuilt = [t for it in run.iterations for t in it.generated]
    assert rebuilt == body
    for it in run.iterations:
        assert 0 < it.loss_start < len(it.tokens)


def test_flops_formula_matches_per_token_oracle():
    rng = random.Random(1)
    for _ in range(200):
        prompt = ["p"] * rng.randint(1, 4)
        body: list[str] = []
        for _ in range(rng.randint(1, 4)):
            body += [C] + ["t"] * rng.randint(0, 3) + [S] + ["a"] * rng.randint(0, 2) + [R]
        body.append(END_OF_TEXT)
        run = scaffold(prompt, body)
        g, r = formula_flops(run)
        assert g + r == total_flops(run)
        assert g + r == 2 * count_flops(run)


def test_flops_without_reduction_is_single_segment_cost():
    its = [
        Iteration(tokens=("p", "a", "b"), loss_start=1),
        Iteration(tokens=("p", "x", "c"), loss_start=2),
    ]
    # full chain = prompt(1) + 3 generated tokens -> positions 2, 3, 4
    assert flops_without_reduction(its) == 2 * (2 + 3 + 4)
