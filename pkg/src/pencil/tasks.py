"""Uniform dispatch over the three reasoning tasks.

The SAT, QBF, and logic-puzzle modules share a four-part surface — generate an
instance, render its prompt, write out the full scaffolded trace, and answer by
brute force. This facade names that surface once so corpus building and the
command line stay task-agnostic. Labels are normalized to strings ("True" /
"False" for the boolean tasks, the fish owner's nationality for puzzles).

For puzzles, ``n`` is the number of houses; instances use an equal number of
attribute categories (the 3x3 and 4x4 sizes are n=3 and n=4).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .puzzle import (
    fish_owner,
    gen_puzzle,
    puzzle_prompt,
    puzzle_trace,
    solution_grid,
)
from .qbf import brute_force_qbf, gen_qbf, qbf_prompt, qbf_trace
from .sat import brute_force_sat, gen_sat, sat_prompt, sat_trace

#: Task names accepted everywhere a ``task`` argument appears.
TASKS: tuple[str, ...] = ("sat", "qbf", "puzzle")


@dataclass(frozen=True)
class TaskInstance:
    """One generated problem, tagged with how it was drawn."""

    task: str
    n: int
    seed: int
    data: Any

    @property
    def instance_id(self) -> str:
        """Reproducible identifier encoding the generator inputs."""
        return f"{self.task}{self.n}-s{self.seed}"


def generate(task: str, n: int, seed: int) -> TaskInstance:
    """Draw one instance of ``task`` at size ``n`` from the given seed."""
    if task == "sat":
        data: Any = gen_sat(n, seed)
    elif task == "qbf":
        data = gen_qbf(n, seed)
    elif task == "puzzle":
        data = gen_puzzle(n, n, seed)
    else:
        raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")
    return TaskInstance(task=task, n=n, seed=seed, data=data)


def prompt(instance: TaskInstance) -> list[str]:
    """The instance's prompt tokens (through ``<|endofprompt|>``)."""
    if instance.task == "sat":
        return sat_prompt(instance.data)
    if instance.task == "qbf":
        return qbf_prompt(instance.data)
    return puzzle_prompt(instance.data)


def trace(instance: TaskInstance) -> tuple[list[str], str]:
    """Full written-out chain (prompt included) and the normalized label."""
    if instance.task == "sat":
        chain, answer = sat_trace(instance.data)
    elif instance.task == "qbf":
        chain, answer = qbf_trace(instance.data)
    else:
        chain, answer = puzzle_trace(instance.data)
        if answer is None:
            raise ValueError(f"{instance.instance_id}: instance has no solution")
    return chain, str(answer)


def oracle(instance: TaskInstance) -> str:
    """Brute-force label, independent of the trace writer."""
    if instance.task == "sat":
        return str(brute_force_sat(instance.data, instance.n))
    if instance.task == "qbf":
        return str(brute_force_qbf(instance.data))
    return fish_owner(solution_grid(instance.data), instance.data)
