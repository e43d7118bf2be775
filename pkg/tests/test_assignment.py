import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowdmot.assignment import CostMatrix, EmptyMatrix, assignment_cost, solve_assignment


def brute_force_min_cost(costs):
    """Enumerate all maximal injective row->col matchings."""
    rows, cols = len(costs), len(costs[0])
    k = min(rows, cols)
    best = None
    if rows <= cols:
        for combo in itertools.permutations(range(cols), k):
            total = sum(costs[i][combo[i]] for i in range(k))
            if best is None or total < best:
                best = total
    else:
        for row_pick in itertools.permutations(range(rows), k):
            for perm in itertools.permutations(range(k)):
                total = sum(costs[row_pick[i]][perm[i]] for i in range(k))
                if best is None or total < best:
                    best = total
    return best


def brute_force_lex_optimum(costs, tol=1e-12):
    """All optimal matchings, then the lexicographically smallest pair list."""
    rows, cols = len(costs), len(costs[0])
    k = min(rows, cols)
    candidates = []
    for row_pick in itertools.combinations(range(rows), k):
        for col_perm in itertools.permutations(range(cols), k):
            pairs = sorted(zip(row_pick, col_perm))
            total = sum(costs[i][j] for i, j in pairs)
            candidates.append((total, pairs))
    best = min(c[0] for c in candidates)
    optima = [pairs for total, pairs in candidates if total <= best + tol]
    return min(optima)


class TestExamples:
    def test_single_cell(self):
        assert solve_assignment([[1.0]]) == [(0, 0)]
        assert assignment_cost([[1.0]]) == 1.0

    def test_two_by_two(self):
        costs = [[1.0, 2.0], [2.0, 1.0]]
        # oracle: both permutations enumerated
        assert brute_force_min_cost(costs) == 2.0
        assert solve_assignment(costs) == [(0, 0), (1, 1)]
        assert assignment_cost(costs) == 2.0

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrix):
            solve_assignment([])
        with pytest.raises(EmptyMatrix):
            solve_assignment([[]])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            CostMatrix(((1.0, float("inf")),))

    def test_ties_break_lex(self):
        assert solve_assignment([[1.0, 1.0], [1.0, 1.0]]) == [(0, 0), (1, 1)]
        assert solve_assignment([[5.0, 5.0, 5.0]] * 3) == [(0, 0), (1, 1), (2, 2)]


class TestAgainstBruteForce:
    def test_random_square(self):
        rng = np.random.default_rng(1234)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            costs = rng.uniform(0, 10, size=(n, n)).tolist()
            assert assignment_cost(costs) == brute_force_min_cost(costs)

    def test_random_rectangular(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            r = int(rng.integers(1, 6))
            c = int(rng.integers(1, 6))
            costs = rng.uniform(-5, 5, size=(r, c)).tolist()
            pairs = solve_assignment(costs)
            assert len(pairs) == min(r, c)
            assert len({i for i, _ in pairs}) == len(pairs)
            assert len({j for _, j in pairs}) == len(pairs)
            got = sum(costs[i][j] for i, j in pairs)
            assert got == pytest.approx(brute_force_min_cost(costs), abs=1e-9)

    def test_lex_tie_break_matches_enumeration(self):
        # integer-valued matrices make ties common
        rng = np.random.default_rng(7)
        for _ in range(300):
            r = int(rng.integers(1, 5))
            c = int(rng.integers(1, 5))
            costs = rng.integers(0, 3, size=(r, c)).astype(float).tolist()
            assert solve_assignment(costs) == brute_force_lex_optimum(costs)


class TestProperties:
    @given(
        n=st.integers(2, 5),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=100, deadline=None)
    def test_row_permutation_equivariance(self, n, seed):
        rng = np.random.default_rng(seed)
        costs = rng.uniform(0, 1, size=(n, n))
        perm = rng.permutation(n)
        base = solve_assignment(costs.tolist())
        permuted = solve_assignment(costs[perm].tolist())
        # same total cost, and (for these a.s.-unique optima) same mapping
        assert sum(costs[perm][i][j] for i, j in permuted) == pytest.approx(
            sum(costs[i][j] for i, j in base), abs=1e-9
        )
        base_map = dict(base)
        assert all(base_map[perm[i]] == j for i, j in permuted)

    @given(
        n=st.integers(1, 5),
        shift=st.floats(-100, 100, allow_nan=False),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=100, deadline=None)
    def test_constant_shift(self, n, shift, seed):
        rng = np.random.default_rng(seed)
        costs = rng.uniform(0, 1, size=(n, n))
        before = assignment_cost(costs.tolist())
        after = assignment_cost((costs + shift).tolist())
        assert after == pytest.approx(before + shift * n, abs=1e-6)
