"""Logic-grid house puzzles: generator, brute-force oracle, and solver traces.

An instance assigns each of ``houses`` houses one value per category
(colors, nationalities, pets, ...), every value used exactly once per
category.  Constraints relate two attribute values: RIGHT/LEFT mean the
left-hand value's house is immediately right/left of the right-hand
value's house, SAME means they share a house.  The solver trace runs
constraint propagation in verbose natural language, summarizes the grid
with a tail call after each propagation pass, and branches on the first
undecided cell, erasing failed branches via the reduction rule.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Iterator, Optional

from .core import CALL, END_OF_PROMPT, END_OF_TEXT, RETURN, SEP, START_OF_TEXT

RIGHT = "RIGHT"
LEFT = "LEFT"
SAME = "SAME"

# Value pools in addition order: a puzzle with h houses uses the first h
# entries of each pool, displayed in alphabetical order.  Names are unique
# across categories so a value determines its category.
_POOLS = {
    "Color": ("Blue", "Green", "Red", "White", "Yellow"),
    "Nationality": ("Brit", "German", "Swede", "Dane", "Norwegian"),
    "Pet": ("Birds", "Dogs", "Fish", "Cats", "Horses"),
    "Drink": ("Coffee", "Milk", "Tea", "Beer", "Water"),
    "Sport": ("Football", "Hockey", "Soccer", "Baseball", "Tennis"),
}

# Category pool in addition order; a puzzle with c categories uses the
# first c entries, displayed in alphabetical order.
_CATEGORY_ORDER = ("Color", "Nationality", "Pet", "Drink", "Sport")

_PROMPT_PHRASES = {
    "Color": "the {} house",
    "Nationality": "the {}",
    "Pet": "the one who keeps {}",
    "Drink": "the one who drinks {}",
    "Sport": "the one who plays {}",
}

_RELATION_PHRASES = {
    RIGHT: "is immediately to the right of",
    LEFT: "is immediately to the left of",
    SAME: "is the same house as",
}

MAX_HOUSES = 5
MAX_CATEGORIES = 5


def category_values(category: str, houses: int) -> tuple[str, ...]:
    """The alphabetical value set a category uses at a given house count."""
    return tuple(sorted(_POOLS[category][:houses]))


def puzzle_categories(count: int) -> tuple[str, ...]:
    """The alphabetical category set for a given category count."""
    return tuple(sorted(_CATEGORY_ORDER[:count]))


@dataclass(frozen=True)
class Constraint:
    """A relation between two attribute values from (possibly) different categories."""

    kind: str  # RIGHT | LEFT | SAME
    lhs: str
    rhs: str

    def __post_init__(self) -> None:
        if self.kind not in (RIGHT, LEFT, SAME):
            raise ValueError(f"unknown constraint kind: {self.kind!r}")


@dataclass(frozen=True)
class Puzzle:
    """A puzzle instance; ``solution`` is generator-internal ground truth."""

    houses: int
    categories: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    solution: Optional[tuple[tuple[str, ...], ...]] = None

    def __post_init__(self) -> None:
        if not 3 <= self.houses <= MAX_HOUSES:
            raise ValueError(f"houses must be 3..{MAX_HOUSES}, got {self.houses}")
        if not 3 <= len(self.categories) <= MAX_CATEGORIES:
            raise ValueError(f"need 3..{MAX_CATEGORIES} categories")
        owner = self.value_categories()
        for con in self.constraints:
            for value in (con.lhs, con.rhs):
                if value not in owner:
                    raise ValueError(f"value {value!r} not in any declared category")

    def values(self, category: str) -> tuple[str, ...]:
        return category_values(category, self.houses)

    def value_categories(self) -> dict[str, str]:
        """Map every usable attribute value to its category."""
        return {
            value: cat for cat in self.categories for value in self.values(cat)
        }


def gen_puzzle(houses: int, categories: int, seed: int) -> Puzzle:
    """Generate a unique-solution instance by harvesting constraints from a random grid.

    All SAME pairs within each house and all RIGHT/LEFT pairs between
    adjacent houses are collected (both orientations), shuffled, then
    greedily dropped while the brute-force oracle still reports a unique
    solution.  Every surviving constraint is necessary.
    """
    if not 3 <= houses <= MAX_HOUSES:
        raise ValueError(f"houses must be 3..{MAX_HOUSES}, got {houses}")
    if not 3 <= categories <= MAX_CATEGORIES:
        raise ValueError(f"categories must be 3..{MAX_CATEGORIES}, got {categories}")
    rng = random.Random(seed)
    cats = puzzle_categories(categories)
    while True:
        solution = tuple(
            zip(*(rng.sample(category_values(cat, houses), houses) for cat in cats))
        )
        candidates = _harvest(solution, len(cats))
        rng.shuffle(candidates)
        base = Puzzle(houses, cats, tuple(candidates), solution)
        if len(brute_force_puzzle(base, limit=2)) != 1:
            continue  # cannot happen for this harvest; regenerate defensively
        kept = list(candidates)
        for con in candidates:
            trial = [c for c in kept if c is not con]
            trimmed = Puzzle(houses, cats, tuple(trial), solution)
            if len(brute_force_puzzle(trimmed, limit=2)) == 1:
                kept = trial
        return Puzzle(houses, cats, tuple(kept), solution)


def _harvest(
    solution: tuple[tuple[str, ...], ...], n_cats: int
) -> list[Constraint]:
    houses = len(solution)
    found: list[Constraint] = []
    for h in range(houses):
        for a, b in combinations(range(n_cats), 2):
            x, y = solution[h][a], solution[h][b]
            found.append(Constraint(SAME, x, y))
            found.append(Constraint(SAME, y, x))
    for h in range(houses - 1):
        for a in range(n_cats):
            for b in range(n_cats):
                right_value = solution[h + 1][a]
                left_value = solution[h][b]
                found.append(Constraint(RIGHT, right_value, left_value))
                found.append(Constraint(LEFT, left_value, right_value))
    return found


def _relation_holds(kind: str, lhs_house: int, rhs_house: int) -> bool:
    if kind == RIGHT:
        return lhs_house == rhs_house + 1
    if kind == LEFT:
        return lhs_house == rhs_house - 1
    return lhs_house == rhs_house


def brute_force_puzzle(
    puzzle: Puzzle, limit: Optional[int] = None
) -> list[tuple[tuple[str, ...], ...]]:
    """Enumerate all satisfying grids (as house-major tuples aligned to categories).

    Exhaustive search over per-category permutations with pruning between
    category levels; ``limit`` stops early once that many solutions exist.
    """
    cats = puzzle.categories
    owner = puzzle.value_categories()
    cat_level = {cat: i for i, cat in enumerate(cats)}
    # Constraints become checkable once both their categories are assigned.
    by_level: list[list[Constraint]] = [[] for _ in cats]
    for con in puzzle.constraints:
        level = max(cat_level[owner[con.lhs]], cat_level[owner[con.rhs]])
        by_level[level].append(con)

    solutions: list[tuple[tuple[str, ...], ...]] = []
    house_of: dict[str, int] = {}
    chosen: list[tuple[str, ...]] = []

    def descend(level: int) -> None:
        if limit is not None and len(solutions) >= limit:
            return
        if level == len(cats):
            solutions.append(tuple(zip(*chosen)))
            return
        for perm in permutations(puzzle.values(cats[level])):
            for h, value in enumerate(perm):
                house_of[value] = h
            if all(
                _relation_holds(c.kind, house_of[c.lhs], house_of[c.rhs])
                for c in by_level[level]
            ):
                chosen.append(perm)
                descend(level + 1)
                chosen.pop()
                if limit is not None and len(solutions) >= limit:
                    break
        for value in puzzle.values(cats[level]):
            house_of.pop(value, None)

    descend(0)
    return solutions


def puzzle_prompt(puzzle: Puzzle) -> list[str]:
    """Render the constraint list as the natural-language prompt."""
    owner = puzzle.value_categories()
    words: list[str] = [START_OF_TEXT]
    for num, con in enumerate(puzzle.constraints, start=1):
        lhs = _PROMPT_PHRASES[owner[con.lhs]].format(con.lhs)
        rhs = _PROMPT_PHRASES[owner[con.rhs]].format(con.rhs)
        words.extend(f"Constraint#{num} : {lhs} {_RELATION_PHRASES[con.kind]} {rhs}".split())
    words.append(END_OF_PROMPT)
    return words


# One candidate grid: grid[house][category index] -> list of still-possible
# values in canonical order; a single-value cell is pinned.
_Grid = list[list[list[str]]]


class _TraceSolver:
    """Backtracking solver that writes the verbose scaffolded trace."""

    def __init__(self, puzzle: Puzzle):
        self.puzzle = puzzle
        self.owner = puzzle.value_categories()
        self.cat_index = {cat: i for i, cat in enumerate(puzzle.categories)}
        self.out: list[str] = []

    def emit(self, text: str) -> None:
        self.out.extend(text.split())

    # -- state helpers ---------------------------------------------------

    def _pinned_house(self, grid: _Grid, value: str) -> Optional[int]:
        ci = self.cat_index[self.owner[value]]
        for h in range(self.puzzle.houses):
            if grid[h][ci] == [value]:
                return h
        return None

    def _satisfied(self, grid: _Grid, con: Constraint) -> bool:
        lhs_house = self._pinned_house(grid, con.lhs)
        rhs_house = self._pinned_house(grid, con.rhs)
        if lhs_house is None or rhs_house is None:
            return False
        return _relation_holds(con.kind, lhs_house, rhs_house)

    def _solved(self, grid: _Grid, live: set[int]) -> bool:
        for h in range(self.puzzle.houses):
            for cell in grid[h]:
                if len(cell) != 1:
                    return False
        for ci in range(len(self.puzzle.categories)):
            if len({grid[h][ci][0] for h in range(self.puzzle.houses)}) != self.puzzle.houses:
                return False
        return all(self._satisfied(grid, self.puzzle.constraints[k - 1]) for k in live)

    @staticmethod
    def _has_empty(grid: _Grid) -> bool:
        return any(not cell for row in grid for cell in row)

    # -- rendering helpers -----------------------------------------------

    def _listing(self, title: str, grid: _Grid, live: set[int]) -> None:
        self.emit(f"====== {title} ======")
        for h in range(self.puzzle.houses):
            self.emit(f"House#{h + 1}")
            for ci, cat in enumerate(self.puzzle.categories):
                cell = grid[h][ci]
                if len(cell) == 1:
                    self.emit(f"{cat} category is {cell[0]}")
                else:
                    self.emit(
                        f"{cat} category have {len(cell)} possibilities {' '.join(cell)}"
                    )
        self.emit("Unsatisfied constraints are")
        for k in sorted(live):
            self.emit(f"Constraint#{k}")

    def _pinned_listing(self, grid: _Grid) -> None:
        for h in range(self.puzzle.houses):
            self.emit(f"House#{h + 1}")
            for ci, cat in enumerate(self.puzzle.categories):
                self.emit(f"{cat} category is {grid[h][ci][0]}")

    @staticmethod
    def _cell_state(cell: list[str]) -> str:
        if not cell:
            return "0 possibilities empty"
        return f"{len(cell)} possibilities {' '.join(cell)}"

    def _diff_block(self, before: _Grid, after: _Grid) -> None:
        changes = []
        for ci, cat in enumerate(self.puzzle.categories):
            for h in range(self.puzzle.houses):
                if before[h][ci] != after[h][ci]:
                    changes.append(
                        f"House#{h + 1} {cat} category changed from "
                        f"{self._cell_state(before[h][ci])} to {self._cell_state(after[h][ci])}"
                    )
        if changes:
            for line in changes:
                self.emit(line)
        else:
            self.emit("No changes from this constraint")

    # -- constraint application -------------------------------------------

    def _remove(self, grid: _Grid, house: int, value: str) -> None:
        ci = self.cat_index[self.owner[value]]
        grid[house][ci] = [v for v in grid[house][ci] if v != value]

    def _present(self, grid: _Grid, house: int, value: str) -> bool:
        return value in grid[house][self.cat_index[self.owner[value]]]

    def _place(self, grid: _Grid, house: int, value: str) -> None:
        ci = self.cat_index[self.owner[value]]
        grid[house][ci] = [value] if value in grid[house][ci] else []

    def _apply(self, grid: _Grid, con: Constraint) -> None:
        x, y, kind = con.lhs, con.rhs, con.kind
        self.emit(f"PHASE 1: Single-value logic for {x} and {y} under {kind} constraint")
        swept: list[str] = []
        for cat in (self.owner[x], self.owner[y]):
            if cat not in swept:
                swept.append(cat)
                self._single_value_sweep(grid, cat)
        self.emit(f"PHASE 2: Handling relation {x} {kind} {y}")
        if kind == SAME:
            self.emit(f"{x} must be in the SAME house as {y}")
            self._apply_same(grid, x, y)
        else:
            self.emit(f"{x} is immediately {kind} of {y}")
            self._apply_adjacent(grid, x, y, kind)

    def _single_value_sweep(self, grid: _Grid, cat: str) -> None:
        ci = self.cat_index[cat]
        n = self.puzzle.houses
        for h in range(n):
            if len(grid[h][ci]) == 1:
                value = grid[h][ci][0]
                for k in range(n):
                    if k != h and value in grid[k][ci]:
                        self._remove(grid, k, value)
                        self.emit(
                            f"Removing {value} from House#{k + 1} {cat} category "
                            f"because {value} is pinned in another house"
                        )
        for value in self.puzzle.values(cat):
            homes = [h for h in range(n) if value in grid[h][ci]]
            if len(homes) == 1 and len(grid[homes[0]][ci]) > 1:
                grid[homes[0]][ci] = [value]
                self.emit(
                    f"Forcing {value} in House#{homes[0] + 1} {cat} category "
                    f"because it can only appear here"
                )

    def _apply_adjacent(self, grid: _Grid, x: str, y: str, kind: str) -> None:
        n = self.puzzle.houses
        step = 1 if kind == RIGHT else -1  # x sits at (house of y) + step
        x_house = self._pinned_house(grid, x)
        y_house = self._pinned_house(grid, y)
        if x_house is not None and y_house is not None:
            return
        if y_house is not None:
            target = y_house + step
            side = "right" if kind == RIGHT else "left"
            for k in range(n):
                if k != target and self._present(grid, k, x):
                    self._remove(grid, k, x)
                    self.emit(
                        f"Since {y} is pinned to House#{y_house + 1} , removing {x} "
                        f"from House#{k + 1} because {x} must be {side} of House#{y_house + 1}"
                    )
            if 0 <= target < n:
                self.emit(
                    f"Placing {x} in House#{target + 1} "
                    f"because {y} is pinned to House#{y_house + 1}"
                )
                self._place(grid, target, x)
        elif x_house is not None:
            target = x_house - step
            side = "LEFT" if kind == RIGHT else "RIGHT"
            for k in range(n):
                if k != target and self._present(grid, k, y):
                    self._remove(grid, k, y)
                    self.emit(
                        f"{y} must be exactly one house to the {side} , "
                        f"removing from House#{k + 1}"
                    )
            if 0 <= target < n:
                self.emit(
                    f"Placing {y} in House#{target + 1} "
                    f"because {x} is pinned to House#{x_house + 1}"
                )
                self._place(grid, target, y)
        else:
            # Edge eliminations; the trailing clause of the second line matches
            # the corpus this format was learned from.
            x_edge, y_edge = (0, n - 1) if kind == RIGHT else (n - 1, 0)
            if self._present(grid, x_edge, x):
                self._remove(grid, x_edge, x)
                first, second = ("leftmost", "RIGHT") if kind == RIGHT else ("rightmost", "LEFT")
                self.emit(
                    f"Removing {x} from House#{x_edge + 1} because {x} "
                    f"can't be in the {first} house if it's to the {second} of {y}"
                )
            if self._present(grid, y_edge, y):
                self._remove(grid, y_edge, y)
                if kind == RIGHT:
                    self.emit(
                        f"Removing {y} from House#{y_edge + 1} "
                        f"can't be in the rightmost house if it's to the LEFT of {x}"
                    )
                else:
                    self.emit(
                        f"Removing {y} from House#{y_edge + 1} because {y} "
                        f"can't be in the leftmost house if it's to the RIGHT of {x}"
                    )

    def _apply_same(self, grid: _Grid, x: str, y: str) -> None:
        n = self.puzzle.houses
        x_house = self._pinned_house(grid, x)
        y_house = self._pinned_house(grid, y)
        if x_house is not None and y_house is not None:
            return
        if y_house is None and x_house is not None:
            # Mirror of the pinned-rhs case with roles swapped.
            x, y = y, x
            y_house = x_house
        if y_house is None:
            return
        if self._present(grid, y_house, x):
            self._place(grid, y_house, x)
            self.emit(f"Placing {x} in House#{y_house + 1} since {y} is in this house")
            for k in range(n):
                if k != y_house and self._present(grid, k, x):
                    self._remove(grid, k, x)
                    self.emit(
                        f"Since {y} is pinned to House#{y_house + 1} , "
                        f"removing {x} from House#{k + 1}"
                    )
        else:
            for k in range(n):
                if k != y_house and self._present(grid, k, x):
                    self._remove(grid, k, x)
                    self.emit(
                        f"Since {y} is pinned to House#{y_house + 1} , "
                        f"removing {x} from House#{k + 1}"
                    )
            self.emit(f"House#{y_house + 1} can't hold {x} since it can't hold {y}")
            self._remove(grid, y_house, y)

    # -- solve blocks -------------------------------------------------------

    def solve(self, grid: _Grid, live: set[int]) -> Optional[_Grid]:
        """Emit one [CALL] ... [RETURN] solve block; return the solved grid or None."""
        self.emit(CALL)
        self._listing("Possible Assignments", grid, live)
        if self._solved(grid, live):
            self.emit("=> Puzzle is solved")
            return self._close_solution(grid)
        self.emit("=> Puzzle not solved yet")
        self.emit("====== Propagation ======")
        for k in sorted(live):
            con = self.puzzle.constraints[k - 1]
            before = [[list(cell) for cell in row] for row in grid]
            self.emit(f"Applying Constraint#{k}")
            self.emit(CALL)
            self._apply(grid, con)
            self.emit(SEP)
            self._diff_block(before, grid)
            self.emit(RETURN)
            if self._satisfied(grid, con):
                live.discard(k)
                self.emit(f"Remove Constraint#{k} because it is satisfied")
            if self._has_empty(grid):
                return self._close_failure()
        self.emit(SEP)
        self.emit(CALL)
        self._listing("Possible Assignments After Propagation", grid, live)
        self.emit(RETURN)
        if self._solved(grid, live):
            self.emit("=> Puzzle is solved")
            return self._close_solution(grid)
        self.emit("=> Puzzle not solved yet")
        self.emit("====== Branch ======")
        cell = self._branch_cell(grid)
        if cell is None:
            return self._close_failure()
        house, ci = cell
        cat = self.puzzle.categories[ci]
        options = grid[house][ci]
        self.emit(
            f"Branching on House#{house + 1} {cat} category "
            f"with {len(options)} possibilities {' '.join(options)}"
        )
        for value in options:
            if any(
                grid[h][ci] == [value] for h in range(self.puzzle.houses) if h != house
            ):
                continue
            self.emit(f"Trying possibility {value} in House#{house + 1} {cat} category")
            child = [[list(c) for c in row] for row in grid]
            child[house][ci] = [value]
            solved = self.solve(child, set(live))
            if solved is not None:
                return self._close_solution(solved)
        return self._close_failure()

    def _branch_cell(self, grid: _Grid) -> Optional[tuple[int, int]]:
        for h in range(self.puzzle.houses):
            for ci in range(len(self.puzzle.categories)):
                if len(grid[h][ci]) >= 2:
                    return h, ci
        return None

    def _close_solution(self, grid: _Grid) -> _Grid:
        self.emit(SEP)
        self.emit("Solution")
        self._pinned_listing(grid)
        self.emit(RETURN)
        return grid

    def _close_failure(self) -> None:
        self.emit(SEP)
        self.emit("No Solution")
        self.emit(RETURN)
        return None


def puzzle_trace(puzzle: Puzzle) -> tuple[list[str], Optional[str]]:
    """Full scaffolded trace for an instance; answer is the fish owner's nationality."""
    solver = _TraceSolver(puzzle)
    solver.out.extend(puzzle_prompt(puzzle))
    grid: _Grid = [
        [list(puzzle.values(cat)) for cat in puzzle.categories]
        for _ in range(puzzle.houses)
    ]
    live = set(range(1, len(puzzle.constraints) + 1))
    solved = solver.solve(grid, live)
    answer: Optional[str] = None
    if solved is not None:
        pet_index = solver.cat_index["Pet"]
        nat_index = solver.cat_index["Nationality"]
        fish_house = next(
            h for h in range(puzzle.houses) if solved[h][pet_index] == ["Fish"]
        )
        answer = solved[fish_house][nat_index][0]
        solver.emit(f"=> House#{fish_house + 1} owns the Fish")
        solver.emit(f"=> the {answer} owns the Fish")
    solver.emit(END_OF_TEXT)
    return solver.out, answer


def solution_grid(puzzle: Puzzle) -> tuple[tuple[str, ...], ...]:
    """The unique satisfying grid, via the brute-force oracle."""
    solutions = brute_force_puzzle(puzzle, limit=2)
    if len(solutions) != 1:
        raise ValueError(f"instance has {len(solutions)} solutions, expected exactly 1")
    return solutions[0]


def fish_owner(grid: tuple[tuple[str, ...], ...], puzzle: Puzzle) -> str:
    """Fish owner's nationality under a solved grid (oracle-side answer)."""
    pet_index = puzzle.categories.index("Pet")
    nat_index = puzzle.categories.index("Nationality")
    for row in grid:
        if row[pet_index] == "Fish":
            return row[nat_index]
    raise ValueError("no house keeps Fish")
