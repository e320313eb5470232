import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from mmwplan.bilp import (BilpError, BilpProblem, BilpSolution, Status, exact_violation,
                          greedy_max_coverage, simplex_bounded, simplex_highs, solve_branch_and_bound,
                          solve_exhaustive, solve_lp, verify)
from oracles import brute_bilp, random_bilp


def test_exhaustive_tie_break():
    p = BilpProblem.from_rows([1, 1], [([1, 1], "<=", 1)])
    s = solve_exhaustive(p)
    assert s.objective == 1 and tuple(s.x) == (0, 1)


def test_infeasible():
    p = BilpProblem.from_rows([1], [([1], ">=", 1), ([1], "<=", 0)])
    assert solve_exhaustive(p).status == Status.INFEASIBLE
    assert solve_branch_and_bound(p).status == Status.INFEASIBLE


def test_exhaustive_refuses_large():
    with pytest.raises(BilpError):
        solve_exhaustive(BilpProblem.from_rows(np.ones(25)))


def test_zero_objective():
    p = BilpProblem.from_rows([0, 0, 0], [([1, 1, 1], "=", 2)])
    s = solve_branch_and_bound(p)
    assert s.objective == 0 and s.status == Status.OPTIMAL and p.is_feasible(s.x)


def test_problem_validation():
    with pytest.raises(ValueError):
        BilpProblem.from_rows([1, 2], [([1], "<=", 1)])
    with pytest.raises(ValueError):
        BilpProblem.from_rows([1, np.inf])
    with pytest.raises(ValueError):
        BilpProblem([1.0], sparse.csr_matrix([[1.0]]), ["<"], [1.0])


@pytest.mark.parametrize("seed", range(40))
def test_bnb_matches_exhaustive_and_brute(seed):
    rng = np.random.default_rng(seed)
    c, rows, _ = random_bilp(rng)
    p = BilpProblem.from_rows(c, rows)
    ex = solve_exhaustive(p)
    bb = solve_branch_and_bound(p)
    val, _ = brute_bilp(c, rows)
    assert ex.status == bb.status
    if val is None:
        assert ex.status == Status.INFEASIBLE
        return
    assert ex.objective == pytest.approx(val, abs=1e-9)
    assert bb.objective == ex.objective
    verify(p, bb)


def test_exhaustive_lexicographic_against_brute():
    rng = np.random.default_rng(11)
    n = 10
    c = rng.integers(0, 3, n).astype(float)
    rows = [(rng.integers(-2, 3, n).astype(float), "<=", float(rng.integers(0, 4)))
            for _ in range(5)]
    val, arg = brute_bilp(c, rows)
    s = solve_exhaustive(BilpProblem.from_rows(c, rows))
    assert s.objective == val and tuple(s.x) == arg


@pytest.mark.parametrize("seed", range(10))
def test_lp_bound_dominates_integer_optimum(seed):
    rng = np.random.default_rng(1000 + seed)
    c, rows, _ = random_bilp(rng)
    p = BilpProblem.from_rows(c, rows)
    ex = solve_exhaustive(p)
    lp = solve_lp(p.c, p.A, p.senses, p.rhs, np.zeros(p.n), np.ones(p.n))
    if ex.status == Status.OPTIMAL:
        assert lp.status == "optimal" and lp.fun >= ex.objective - 1e-7


@pytest.mark.parametrize("seed", range(10))
def test_dense_simplex_matches_highs(seed):
    rng = np.random.default_rng(2000 + seed)
    c, rows, _ = random_bilp(rng)
    p = BilpProblem.from_rows(c, rows)
    lo, hi = np.zeros(p.n), np.ones(p.n)
    hi[rng.random(p.n) < 0.2] = 0.0
    a = simplex_bounded(p.c, p.A, p.senses, p.rhs, lo, hi)
    b = simplex_highs(p.c, p.A, p.senses, p.rhs, lo, hi)
    assert a.status == b.status
    if a.status == "optimal":
        assert a.fun == pytest.approx(b.fun, abs=1e-7)


def test_deterministic_nodes():
    rng = np.random.default_rng(5)
    c, rows, _ = random_bilp(rng, "bigm")
    p = BilpProblem.from_rows(c, rows)
    a, b = solve_branch_and_bound(p), solve_branch_and_bound(p)
    assert np.array_equal(a.x, b.x) and a.nodes == b.nodes


def test_node_limit_reports_gap():
    rng = np.random.default_rng(3)
    n = 16
    c = rng.random(n)
    rows = [(rng.random(n), "<=", 3.0) for _ in range(3)]
    p = BilpProblem.from_rows(c, rows)
    with pytest.raises(BilpError):
        solve_branch_and_bound(p, node_limit=0)
    s = solve_branch_and_bound(p, node_limit=1, incumbents=[np.zeros(n, np.int8)])
    assert s.status == Status.FEASIBLE and s.gap >= 0 and s.bound >= s.objective


def test_exact_verification():
    p = BilpProblem.from_rows([1, 1], [([0.1, 0.2], "<=", 0.3)])
    assert exact_violation(p, [1, 1]) == pytest.approx(
        float(Fraction(0.1) + Fraction(0.2) - Fraction(0.3)))


def test_verify_is_relative_to_row_scale():
    # rows with coefficients near 1e11, as when gains are divided by a tiny threshold
    big = 1.234567891e11
    p = BilpProblem.from_rows([1.0, 0.5], [([big, -(big - 6.1e-5)], "<=", 0.0)])
    sol = BilpSolution(np.array([1, 1], np.int8), 1.5, Status.OPTIMAL, 0, 0.0)
    assert 1e-6 < exact_violation(p, sol.x) < 1e-4
    assert verify(p, sol) == exact_violation(p, sol.x, scaled=True) < 1e-15
    bad = BilpProblem.from_rows([1.0, 0.5], [([big, -big / 2], "<=", 0.0)])
    with pytest.raises(BilpError):
        verify(bad, sol)


def test_greedy_examples():
    x = greedy_max_coverage(np.eye(3), [3, 1, 2], 2)
    assert tuple(x) == (1, 0, 1)
    C = np.array([[1, 0], [0, 1], [1, 1]])
    assert greedy_max_coverage(C, [1, 1, 1], 2).sum() == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_greedy_bounds(seed):
    rng = np.random.default_rng(seed)
    C = (rng.random((8, 8)) < 0.3).astype(int)
    w = rng.random(8)
    k = int(rng.integers(1, 5))
    x = greedy_max_coverage(C, w, k)
    g = w[(C[:, x == 1]).any(axis=1)].sum()
    best = 0.0
    from itertools import combinations
    for S in combinations(range(8), k):
        best = max(best, w[C[:, list(S)].any(axis=1)].sum())
    assert g <= best + 1e-12
    assert g >= (1 - 1 / math.e) * best - 1e-12


def test_lp_export():
    p = BilpProblem.from_rows([1, 2], [([1, 1], "<=", 1)], names=("a", "b"))
    text = p.to_lp()
    assert "Maximize" in text and "Binaries" in text and "a" in text


@pytest.mark.parametrize("seed", range(20))
def test_relaxation_row_subset_keeps_optimum(seed):
    rng = np.random.default_rng(900 + seed)
    c, rows, _ = random_bilp(rng, "bigm")
    p = BilpProblem.from_rows(c, rows)
    ref, _ = brute_bilp(c, rows)
    # drop every "<=" row (the upper Big-M rows and possibly the count row)
    keep = np.array([sense != "<=" for _, sense, _ in rows])
    s = solve_branch_and_bound(p, relax_rows=keep)
    if ref is None:
        assert s.x is None
    else:
        assert s.objective == ref and p.is_feasible(s.x)
    with pytest.raises(ValueError):
        solve_branch_and_bound(p, relax_rows=np.ones(p.m + 1, bool))
