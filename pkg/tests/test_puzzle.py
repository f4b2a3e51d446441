"""Puzzle generator, oracle, and trace tests against the golden fixtures."""

import pytest

from pencil.puzzle import (
    Constraint,
    Puzzle,
    brute_force_puzzle,
    category_values,
    fish_owner,
    gen_puzzle,
    puzzle_categories,
    puzzle_prompt,
    puzzle_trace,
    solution_grid,
)
from pencil.reduction import scaffold

from conftest import load_golden

INSTANCE_A = Puzzle(
    houses=3,
    categories=("Color", "Nationality", "Pet"),
    constraints=(
        Constraint("RIGHT", "Green", "Birds"),
        Constraint("RIGHT", "Brit", "German"),
        Constraint("SAME", "Dogs", "Red"),
        Constraint("RIGHT", "Birds", "Swede"),
    ),
)

INSTANCE_B = Puzzle(
    houses=3,
    categories=("Color", "Nationality", "Pet"),
    constraints=(
        Constraint("RIGHT", "Fish", "Red"),
        Constraint("LEFT", "Green", "Red"),
        Constraint("RIGHT", "Fish", "Swede"),
        Constraint("LEFT", "Brit", "Birds"),
    ),
)

INSTANCE_B_SOLUTION = (
    ("Green", "Brit", "Dogs"),
    ("Red", "Swede", "Birds"),
    ("Blue", "German", "Fish"),
)


def test_value_tables():
    assert category_values("Color", 3) == ("Blue", "Green", "Red")
    assert category_values("Nationality", 3) == ("Brit", "German", "Swede")
    assert category_values("Pet", 3) == ("Birds", "Dogs", "Fish")
    assert category_values("Nationality", 4) == ("Brit", "Dane", "German", "Swede")
    assert puzzle_categories(3) == ("Color", "Nationality", "Pet")
    assert puzzle_categories(4) == ("Color", "Drink", "Nationality", "Pet")


def test_prompt_golden():
    assert puzzle_prompt(INSTANCE_A) == load_golden("puzzle_a_prompt")


def test_trace_golden_full_chain():
    tokens, answer = puzzle_trace(INSTANCE_A)
    prompt = puzzle_prompt(INSTANCE_A)
    assert answer == "Brit"
    assert tokens[: len(prompt)] == prompt
    assert tokens[len(prompt) :] == load_golden("puzzle_a_cot")


def test_replay_golden_reductions():
    tokens, _ = puzzle_trace(INSTANCE_A)
    prompt = puzzle_prompt(INSTANCE_A)
    run = scaffold(prompt, tokens[len(prompt) :])
    assert run.num_reductions == 16
    assert list(run.final) == prompt + load_golden("puzzle_a_response")


def test_replay_golden_per_iteration():
    tokens, answer = puzzle_trace(INSTANCE_B)
    prompt = puzzle_prompt(INSTANCE_B)
    assert answer == "German"
    run = scaffold(prompt, tokens[len(prompt) :])
    assert run.num_reductions == 12
    assert len(run.iterations) == 13
    for k in range(1, 13):
        live = load_golden(f"puzzle_b_gen{k:02d}")
        reduced = load_golden(f"puzzle_b_red{k:02d}")
        assert list(run.iterations[k - 1].tokens[len(prompt) :]) == live, f"generation {k}"
        snapshot = run.iterations[k]
        assert (
            list(snapshot.tokens[len(prompt) : snapshot.loss_start]) == reduced
        ), f"reduction {k}"
    assert list(run.final[len(prompt) :]) == load_golden("puzzle_b_final")


def test_brute_force_unique_solution():
    solutions = brute_force_puzzle(INSTANCE_B)
    assert solutions == [INSTANCE_B_SOLUTION]
    assert fish_owner(solutions[0], INSTANCE_B) == "German"


def test_gen_puzzle_deterministic():
    assert gen_puzzle(3, 3, seed=7) == gen_puzzle(3, 3, seed=7)
    assert gen_puzzle(3, 3, seed=7) != gen_puzzle(3, 3, seed=8)


def test_gen_puzzle_unique_and_minimal():
    p = gen_puzzle(3, 3, seed=11)
    assert p.solution is not None
    assert brute_force_puzzle(p) == [p.solution]
    for i in range(len(p.constraints)):
        thinned = Puzzle(
            p.houses,
            p.categories,
            p.constraints[:i] + p.constraints[i + 1 :],
            p.solution,
        )
        assert len(brute_force_puzzle(thinned, limit=2)) >= 2, f"constraint {i} redundant"


@pytest.mark.parametrize("houses,cats,seeds", [(3, 3, range(20)), (4, 4, range(4))])
def test_trace_matches_oracle(houses, cats, seeds):
    for seed in seeds:
        p = gen_puzzle(houses, cats, seed=seed)
        tokens, answer = puzzle_trace(p)
        grid = solution_grid(p)
        assert grid == p.solution
        assert answer == fish_owner(grid, p), f"seed {seed}"
        prompt = puzzle_prompt(p)
        run = scaffold(prompt, tokens[len(prompt) :])
        assert run.final[-1] == "<|endoftext|>"
        assert all(0 < it.loss_start < len(it.tokens) for it in run.iterations)


def test_rejects_bad_sizes():
    with pytest.raises(ValueError):
        gen_puzzle(2, 3, seed=0)
    with pytest.raises(ValueError):
        gen_puzzle(3, 6, seed=0)
    with pytest.raises(ValueError):
        Puzzle(3, ("Color", "Nationality", "Pet"), (Constraint("SAME", "Blue", "Cats"),))
