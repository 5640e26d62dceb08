from fractions import Fraction as F

from hypothesis import given, strategies as st

from knapsack_contracts.lp import EQ, GE, LE, LpProblem, LpStatus, solve_lp_exact
from refimpl import lp_vertex_max


def test_simple_max():
    sol = solve_lp_exact(LpProblem([1], [([1], LE, 3)]))
    assert sol.optimal and sol.value == 3 and sol.x == [3]


def test_infeasible():
    sol = solve_lp_exact(LpProblem([0], [([1], GE, 1), ([1], LE, 0)], sense="min"))
    assert sol.status is LpStatus.INFEASIBLE


def test_unbounded():
    sol = solve_lp_exact(LpProblem([1, 1], [([1, -1], LE, 1)]))
    assert sol.status is LpStatus.UNBOUNDED


def test_equality_and_redundant_rows():
    p = LpProblem([1, 2], [([1, 1], EQ, 1), ([2, 2], EQ, 2), ([0, 1], LE, F(1, 3))])
    sol = solve_lp_exact(p)
    assert sol.value == F(4, 3) and p.is_feasible(sol.x)


def test_degenerate_cycling_example():
    # a classic degenerate LP that cycles under the textbook largest-coefficient rule
    rows = [
        ([F(1, 4), -8, -1, 9], LE, 0),
        ([F(1, 2), -12, F(-1, 2), 3], LE, 0),
        ([0, 0, 1, 0], LE, 1),
    ]
    sol = solve_lp_exact(LpProblem([F(3, 4), -20, F(1, 2), -6], rows))
    assert sol.optimal and sol.value == F(5, 4)


coef = st.fractions(min_value=-3, max_value=3, max_denominator=4)
pos = st.fractions(min_value=F(1, 4), max_value=3, max_denominator=4)


@given(st.tuples(coef, coef), st.lists(st.tuples(st.tuples(coef, coef), pos), min_size=1, max_size=4))
def test_two_variable_lps_match_vertex_enumeration(c, rows):
    # add a box so the LP is bounded; b > 0 keeps the origin feasible
    rows = rows + [((F(1), F(0)), F(5)), ((F(0), F(1)), F(5))]
    sol = solve_lp_exact(LpProblem(list(c), [(list(a), LE, b) for a, b in rows]))
    assert sol.optimal
    assert sol.value == lp_vertex_max(c, rows)
