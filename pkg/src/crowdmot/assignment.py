"""Optimal linear assignment (Hungarian) on small dense cost matrices.

Used to stitch track identities across segment overlaps and to pair
predicted tracks with ground truth. Instances are tiny (tracks per segment,
so tens at most); an O(n^3) shortest-augmenting-path solver is plenty.

Ties between equal-cost optima are broken deterministically: the returned
matching is the lexicographically smallest optimal one when written as
(row, col) pairs sorted by row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class EmptyMatrix(ValueError):
    """solve_assignment was given a matrix with zero rows or columns."""


@dataclass(frozen=True)
class CostMatrix:
    """Dense, finite cost matrix with at least one row and column."""

    costs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(tuple(float(c) for c in row) for row in self.costs))
        if not self.costs or not self.costs[0]:
            raise EmptyMatrix("cost matrix must have at least one row and one column")
        width = len(self.costs[0])
        for i, row in enumerate(self.costs):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} entries, expected {width}")
            for j, c in enumerate(row):
                if not math.isfinite(c):
                    raise ValueError(f"cost[{i}][{j}] is not finite: {c!r}")

    @property
    def rows(self) -> int:
        return len(self.costs)

    @property
    def cols(self) -> int:
        return len(self.costs[0])


def _solve_square(cost: list[list[float]]) -> tuple[list[int], list[float], list[float]]:
    """Shortest-augmenting-path assignment on an n x n matrix.

    Returns (match, u, v) where match[i] is the column assigned to row i and
    (u, v) are optimal dual potentials (1-based, index 0 auxiliary) with
    cost[i][j] - u[i+1] - v[j+1] >= 0, equality on matched pairs.
    """
    n = len(cost)
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row (1-based) matched to column j; 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            row = cost[i0 - 1]
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    match = [0] * n
    for j in range(1, n + 1):
        match[p[j] - 1] = j - 1
    return match, u, v


def _complete_matching(
    adj: list[list[int]], rows: list[int], taken_cols: set[int], n: int
) -> dict[int, int] | None:
    """Perfect matching of `rows` into columns not in `taken_cols`, or None."""
    match_col: dict[int, int] = {}  # col -> row
    for r in rows:
        seen: set[int] = set()

        def augment(row: int) -> bool:
            for c in adj[row]:
                if c in taken_cols or c in seen:
                    continue
                seen.add(c)
                if c not in match_col or augment(match_col[c]):
                    match_col[c] = row
                    return True
            return False

        if not augment(r):
            return None
    return {r: c for c, r in match_col.items()}


def _lex_minimal_matching(adj: list[list[int]], n: int) -> list[int]:
    """Lexicographically smallest perfect matching of the admissible graph.

    Greedy per row with a completability check; the graph is guaranteed to
    contain at least one perfect matching.
    """
    chosen: list[int] = []
    taken: set[int] = set()
    for i in range(n):
        rest = list(range(i + 1, n))
        for c in adj[i]:
            if c in taken:
                continue
            if _complete_matching(adj, rest, taken | {c}, n) is not None:
                chosen.append(c)
                taken.add(c)
                break
        else:  # unreachable if a perfect matching exists
            raise AssertionError("admissible graph lost its perfect matching")
    return chosen


def solve_assignment(
    m: CostMatrix | Sequence[Sequence[float]],
) -> list[tuple[int, int]]:
    """Minimum-cost row/column matching; rectangular matrices are padded
    with zero-cost cells and the padded pairs dropped from the result.

    Returns min(rows, cols) pairs sorted by row index.
    """
    if not isinstance(m, CostMatrix):
        seq = [list(row) for row in m]
        if not seq or not seq[0]:
            raise EmptyMatrix("cost matrix must have at least one row and one column")
        m = CostMatrix(tuple(tuple(row) for row in seq))
    rows, cols = m.rows, m.cols
    n = max(rows, cols)
    cost = [[m.costs[i][j] if i < rows and j < cols else 0.0 for j in range(n)] for i in range(n)]
    _, u, v = _solve_square(cost)

    scale = max(1.0, max(abs(c) for row in m.costs for c in row))
    eps = 1e-9 * scale
    adj = [
        [j for j in range(n) if cost[i][j] - u[i + 1] - v[j + 1] <= eps]
        for i in range(n)
    ]
    match = _lex_minimal_matching(adj, n)
    return [(i, match[i]) for i in range(n) if i < rows and match[i] < cols]


def assignment_cost(m: CostMatrix | Sequence[Sequence[float]]) -> float:
    """Total cost of the optimal assignment, summed in row order."""
    if not isinstance(m, CostMatrix):
        m = CostMatrix(tuple(tuple(float(c) for c in row) for row in m))
    return sum(m.costs[i][j] for i, j in solve_assignment(m))
