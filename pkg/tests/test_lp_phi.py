from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from knapsack_contracts.core import FiniteDistribution as D, MskcChoice, MskcInstance, MskcItem
from knapsack_contracts.instances import gen_lp_gap, gen_random
from knapsack_contracts.lp import LpStatus, solve_lp_exact
from knapsack_contracts.lp_phi import (
    InfeasibleInput,
    check_phi_solution,
    choice_points,
    dominated_pairwise,
    eliminate_dominated,
    phi_lp,
    solve_phi,
    structure_solution,
    upper_hull,
)

TWO = MskcInstance([
    MskcItem(10, [MskcChoice(2, D.point(F(1, 2)))]),
    MskcItem(6, [MskcChoice(1, D.point(F(1, 2)))]),
])


def test_two_item_value():
    sol = solve_phi(TWO)
    assert sol.value == 13
    assert sol.get(0, 1) == 1 and sol.get(1, 1) == 1 and sol.fractional is None
    prob, _ = phi_lp(TWO, 1)
    assert solve_lp_exact(prob).value == 13


def test_empty_instance():
    assert solve_phi(MskcInstance([])).value == 0


def test_double_dominated_choice_removed():
    pts = [(0, F(0), F(0)), (1, F(3, 10), F(2, 10)), (2, F(8, 10), F(9, 10)), (3, F(5, 10), F(6, 10))]
    fr = upper_hull(pts)
    assert fr.choices == (0, 1, 2)
    assert dominated_pairwise(pts) == {3}


def test_single_dominated_choice_removed():
    pts = [(0, F(0), F(0)), (1, F(1, 2), F(1, 2)), (2, F(1, 2), F(3, 4))]
    assert upper_hull(pts).choices == (0, 1)
    assert 2 in dominated_pairwise(pts)


def test_null_survives_when_nothing_profits():
    item = MskcItem(1, [MskcChoice(2, D.point(F(1, 2))), MskcChoice(1, D.point(0))])
    assert eliminate_dominated(item, 1).choices == (0,)


def test_lp_gap_relaxation_is_large():
    assert solve_phi(gen_lp_gap(F(1, 10), 5).instance).value >= F(1, 2)


def test_frontier_slopes_strictly_decrease():
    for seed in range(30):
        inst = gen_random(3, 4, 3, seed).instance
        for i, item in enumerate(inst.items):
            fr = eliminate_dominated(item, 1, index=i)
            segs = list(fr.segments())
            assert all(dw > 0 and dmu > 0 for _, dw, dmu in segs)
            slopes = [dw / dmu for _, dw, dmu in segs]
            assert all(a > b for a, b in zip(slopes, slopes[1:]))


def test_structure_fixed_point():
    sol = solve_phi(TWO, F(3, 4))
    again = structure_solution(TWO, F(3, 4), sol.x)
    assert again.x == sol.x and again.value == sol.value


def _two_choice_item(v):
    return MskcItem(v, [MskcChoice(0, D.point(F(1, 4))), MskcChoice(0, D.point(F(1, 2)))])


def test_structure_merges_two_split_items():
    inst = MskcInstance([_two_choice_item(2), _two_choice_item(3)])
    x = {(0, 1): F(1, 2), (0, 2): F(1, 2), (1, 1): F(1, 2), (1, 2): F(1, 2)}
    before = sum(v * (inst.items[i].value if j else 0) for (i, j), v in x.items())
    sol = structure_solution(inst, 1, x)
    check_phi_solution(inst, sol)
    assert sol.value >= before
    assert sum(1 for i in range(2) if len(sol.item_choices(i)) == 2) <= 1


def test_structure_moves_mass_off_dominated_choice():
    item = MskcItem(1, [
        MskcChoice(F(7, 10), D.point(F(2, 10))),
        MskcChoice(F(2, 10), D.point(F(9, 10))),
        MskcChoice(F(5, 10), D.point(F(6, 10))),
    ])
    inst = MskcInstance([item])
    x = {(0, 3): F(1)}
    sol = structure_solution(inst, 1, x)
    assert sol.get(0, 3) == 0
    assert sol.value >= F(5, 10)


def test_structure_rejects_infeasible_input():
    with pytest.raises(InfeasibleInput):
        structure_solution(TWO, F(1, 2), {(0, 1): 1, (1, 1): 1})
    with pytest.raises(InfeasibleInput):
        structure_solution(TWO, 1, {(0, 1): F(1, 2)})


seeds = st.integers(0, 10**6)


@given(seeds, st.integers(1, 6), st.integers(1, 4), st.sampled_from([F(1, 2), F(1), F(3, 2)]))
def test_frontier_greedy_matches_simplex(seed, n, m, t):
    inst = gen_random(n, m, 3, seed).instance
    a = solve_phi(inst, t)
    b = solve_phi(inst, t, method="simplex")
    assert a.value == b.value
    prob, _ = phi_lp(inst, t)
    raw = solve_lp_exact(prob)
    assert raw.status is LpStatus.OPTIMAL and raw.value == a.value


@given(seeds, st.integers(1, 4))
def test_hull_equals_pairwise_dominance(seed, m):
    item = gen_random(1, m, 3, seed).instance.items[0]
    pts = choice_points(item, 1)
    kept = set(upper_hull(pts).choices)
    assert kept == {j for j, _, _ in pts} - dominated_pairwise(pts)


@given(seeds, st.integers(1, 5), st.sampled_from([F(1), F(3, 2), F(2), F(3)]))
def test_scaling_and_monotonicity(seed, n, c):
    inst = gen_random(n, 3, 3, seed).instance
    for t in (F(1, 2), F(1)):
        assert solve_phi(inst, t, capacity=c * t).value <= c * solve_phi(inst, t).value
        assert solve_phi(inst, t, capacity=c * t).value >= solve_phi(inst, t).value
    assert solve_phi(inst, F(1, 2)).value <= solve_phi(inst, F(1)).value
