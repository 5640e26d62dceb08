import itertools
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from knapsack_contracts.contracts import compute_ior
from knapsack_contracts.core import FiniteDistribution as D, MskcChoice, MskcInstance, MskcItem, choice_size, choice_weight
from knapsack_contracts.engine import CounterStream, execute, expected_profit_exact
from knapsack_contracts.instances import gen_alpha_gap, gen_bounded_gap, gen_lp_gap, gen_random
from knapsack_contracts.contracts import reduce_to_mskc
from knapsack_contracts.lp_phi import solve_phi
from knapsack_contracts.oracle import ordered_adapt_opt
from knapsack_contracts.policies import (
    BudgetThreshold,
    InvalidPolicy,
    NonAdaptivePolicy,
    Step,
    StoppingTimePolicy,
    VirtualStep,
    build_ordered_adaptive,
    build_skc,
    build_skc_bound,
    build_skc_of,
    optimal_stopping_rule,
    policy_from_dict,
    policy_to_dict,
)
from refimpl import knapsack_with_costs, tree_profit

TWO = MskcInstance([
    MskcItem(10, [MskcChoice(2, D.point(F(1, 2)))]),
    MskcItem(6, [MskcChoice(1, D.point(F(1, 2)))]),
])


def det_item(v, p, s):
    return MskcItem(v, [MskcChoice(p, D.point(s))])


def test_policy_validation():
    with pytest.raises(InvalidPolicy):
        NonAdaptivePolicy([Step(0, 1), Step(0, 1)])
    with pytest.raises(ValueError):
        VirtualStep(0, (1, 2), (F(1, 2), F(1, 3)))
    with pytest.raises(ValueError):
        VirtualStep(0, (1, 2), (F(1, 2), F(1, 2)), pick=3)


def test_skc_single_step_on_two_item_instance():
    pol = build_skc(TWO)
    assert pol.info["phi"] == 13 and pol.info["alpha"] == F(1, 4)
    assert pol.info["threshold"] == F(13, 5)
    assert pol.info["branch"] == "single" and pol.steps == (Step(0, 1),)
    of = build_skc_of(TWO, 1)
    assert of.info["threshold"] == F(13, 4) and of.steps == (Step(0, 1),)


def test_skc_single_step_when_one_choice_carries_everything():
    inst = MskcInstance([det_item(3, 1, F(1, 2)), MskcItem(1, [MskcChoice(2, D.point(0))])])
    pol = build_skc(inst)
    assert pol.steps == (Step(0, 1),)
    assert expected_profit_exact(pol, inst) == 2


def test_skc_density_branch_with_many_small_jobs():
    inst = MskcInstance([det_item(1, 0, F(1, 10)) for _ in range(20)])
    pol = build_skc(inst)
    assert pol.info["branch"] == "density" and pol.info["phi"] == 10
    assert len(pol.steps) == 10
    assert expected_profit_exact(pol, inst) == 10


def test_skc_on_lp_gap_meets_its_guarantee():
    inst = gen_lp_gap(F(1, 10), 5).instance
    pol = build_skc(inst)
    bound = pol.info["phi"] / (4 * (1 + compute_ior(inst)))
    assert expected_profit_exact(pol, inst) >= bound


def _assert_density_order(inst, pol, t):
    ws, mus = [], []
    for s in pol.steps:
        item = inst.items[s.item]
        if isinstance(s, VirtualStep):
            (j1, j2), (x1, x2) = s.choices, s.weights
            ws.append(x1 * choice_weight(item, j1, t) + x2 * choice_weight(item, j2, t))
            mus.append(x1 * choice_size(item, j1, t) + x2 * choice_size(item, j2, t))
        else:
            ws.append(choice_weight(item, s.choice, t))
            mus.append(choice_size(item, s.choice, t))
    for k, j in itertools.combinations(range(len(ws)), 2):
        assert ws[k] * mus[j] >= ws[j] * mus[k]


def test_skc_of_density_branch_with_equal_items():
    inst = MskcInstance([det_item(1, 0, F(1, 5)) for _ in range(5)])
    pol = build_skc_of(inst, 1)
    assert pol.info["branch"] == "density" and len(pol.steps) == 5
    _assert_density_order(inst, pol, 1)


def test_density_order_and_virtual_step():
    inst = MskcInstance([det_item(1, 0, F(3, 20)) for _ in range(8)] + [det_item(1, 0, 0)])
    pol = build_skc_of(inst, 1, derandomize=False)
    assert pol.info["branch"] == "density"
    assert pol.steps[0] == Step(8, 1)  # size zero goes first
    last = pol.steps[-1]
    assert isinstance(last, VirtualStep) and last.weights == (F(1, 3), F(2, 3))
    _assert_density_order(inst, pol, 1)
    derand = build_skc_of(inst, 1)
    assert all(not isinstance(s, VirtualStep) or s.pick is not None for s in derand.steps)
    mixed = expected_profit_exact(pol, inst, overflow_collecting=True)
    assert expected_profit_exact(derand, inst, overflow_collecting=True) >= mixed


def test_skc_bound_threshold_semantics():
    delta = F(1, 4)
    inst = MskcInstance([det_item(1, 0, delta / 2) for _ in range(4)])
    built = build_skc_bound(inst, delta)
    assert isinstance(built.rule, BudgetThreshold) and built.rule.theta == delta
    pol = StoppingTimePolicy(NonAdaptivePolicy([Step(i, 1) for i in range(4)]), built.rule)
    tr = execute(pol, inst, CounterStream(0, 0))
    # two jobs reach exactly delta, the third pushes past it and the run stops
    assert [s.completed for s in tr.steps] == [True, True, True]
    assert sum(s.size for s in tr.steps[:2]) == delta
    assert tr.reason.value == "PolicyStop"


def test_skc_bound_order_fills_delta():
    delta = F(1, 4)
    inst = MskcInstance([det_item(1, 0, delta / 8) for _ in range(10)])
    pol = build_skc_bound(inst, delta)
    assert pol.order.info["branch"] == "density" and len(pol.order.steps) == 8
    assert expected_profit_exact(pol, inst) == 8


def test_skc_bound_with_full_budget():
    inst = gen_random(4, 2, 2, 3, "positive-w").instance
    pol = build_skc_bound(inst, 1)
    assert pol.order.steps == build_skc_of(inst, 1).steps or pol.order.info["branch"] == "single"


def test_ordered_dp_single_item():
    inst = MskcInstance([det_item(2, 1, F(1, 2))])
    table, pol = build_ordered_adaptive(inst, F(1, 2))
    assert table.value() == 1
    assert expected_profit_exact(pol, inst, budget=F(3, 2)) == 1


def test_ordered_dp_matches_knapsack_on_grid_sizes():
    eps = F(1, 2)
    for n in (3, 6, 10):
        delta = eps / n
        items = [(F(k % 4 + 2), F(k % 3, 2), delta * (1 + (k * 7) % 5)) for k in range(n)]
        inst = MskcInstance([det_item(v, c, s) for v, c, s in items])
        table, _ = build_ordered_adaptive(inst, eps)
        assert table.value() == knapsack_with_costs(items, 1)


def test_ordered_dp_table_shape():
    inst = gen_random(4, 3, 3, 11).instance
    table, pol = build_ordered_adaptive(inst, F(1, 4))
    assert all(v == 0 for v in table.values[-1])
    for i in range(len(table.values) - 1):
        assert all(a >= b for a, b in zip(table.values[i], table.values[i + 1]))
        row = table.values[i]
        assert all(a <= b for a, b in zip(row, row[1:]))
    ordered = ordered_adapt_opt(inst).value
    assert expected_profit_exact(pol, inst, budget=F(5, 4)) >= ordered


def test_stopping_rule_on_gap_instance():
    eps = F(1, 10)
    inst = reduce_to_mskc(gen_alpha_gap(eps, F(1, 4)).instance).instance
    order = NonAdaptivePolicy([Step(i, 1) for i in range(10)])
    pol = optimal_stopping_rule(inst, order)
    assert pol.rule.value == 1 - (1 - eps) ** 10
    assert expected_profit_exact(pol, inst) == pol.rule.value
    # it stops right after the first job that realises its long size
    for trial in range(200):
        tr = execute(pol, inst, CounterStream(3, trial))
        longs = [k for k, s in enumerate(tr.steps) if s.size > F(1, 2)]
        if longs:
            assert longs[0] == len(tr.steps) - 1 and tr.steps[-1].completed


def test_stopping_never_stops_when_everything_fits():
    inst = MskcInstance([det_item(2, 1, F(1, 4)) for _ in range(4)])
    pol = optimal_stopping_rule(inst, NonAdaptivePolicy([Step(i, 1) for i in range(4)]))
    tr = execute(pol, inst, CounterStream(0, 0))
    assert len(tr.steps) == 4 and tr.reason.value == "Exhausted"


def _hand_recursion_bounded_gap(eps, copies):
    # states: jobs left and whether a long (1/2) job has already completed
    small = eps**copies
    v, c = 2, 2 - eps**2

    def val(left, used):
        if left == 0:
            return F(0)
        cont = -c
        for s, p in ((small, 1 - eps), (F(1, 2), eps)):
            if used + s <= 1:
                cont += p * (v + val(left - 1, used + s))
        return max(F(0), cont)

    return val(copies, F(0))


def test_stopping_value_on_bounded_gap_matches_hand_recursion():
    eps = F(1, 10)
    inst = gen_bounded_gap(eps, 6).instance
    pol = optimal_stopping_rule(inst, NonAdaptivePolicy([Step(i, 1) for i in range(6)]))
    assert pol.rule.value == _hand_recursion_bounded_gap(eps, 6)
    assert pol.rule.value == F(478559, 10**7)


def test_grid_table_agrees_with_exact_table():
    inst = reduce_to_mskc(gen_alpha_gap(F(1, 5), F(1, 3)).instance).instance
    order = NonAdaptivePolicy([Step(i, 1) for i in range(len(inst.items))])
    exact = optimal_stopping_rule(inst, order)
    grid = optimal_stopping_rule(inst, order, exact=False)
    assert abs(grid.rule.value - float(exact.rule.value)) < 1e-12


@given(st.integers(0, 10**6), st.integers(1, 4))
def test_policy_json_round_trip(seed, n):
    inst = gen_random(n, 3, 3, seed, "positive-w").instance
    for pol in (build_skc(inst, derandomize=False), build_skc_bound(inst, F(1, 2)),
                optimal_stopping_rule(inst, build_skc(inst)), build_ordered_adaptive(inst, F(1, 2))[1]):
        back = policy_from_dict(policy_to_dict(pol))
        budget = F(3, 2) if hasattr(pol, "table") else None
        assert expected_profit_exact(back, inst, budget=budget) == expected_profit_exact(pol, inst, budget=budget)


@given(st.integers(0, 10**6), st.integers(1, 4))
def test_policies_agree_with_tree_enumeration(seed, n):
    inst = gen_random(n, 3, 3, seed, "positive-w").instance
    pol = build_skc(inst, derandomize=False)
    assert expected_profit_exact(pol, inst) == tree_profit(pol, inst)
    stop = optimal_stopping_rule(inst, pol)
    assert expected_profit_exact(stop, inst) == tree_profit(stop, inst) == stop.rule.value
