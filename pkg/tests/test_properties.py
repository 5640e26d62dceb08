from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

import propchecks
from knapsack_contracts.engine import estimate_profit_mc
from knapsack_contracts.instances import gen_random
from knapsack_contracts.policies import build_skc


@pytest.mark.parametrize("seed", range(0, 100, 7))
def test_fixed_set_tail_bound(seed):
    assert propchecks.fixed_set_tail(seed) == []


@pytest.mark.parametrize("seed", range(0, 100, 7))
def test_adaptive_inserted_mass(seed):
    assert propchecks.adaptive_inserted_mass(seed) == []


@given(st.integers(0, 10**6))
def test_fixed_set_tail_bound_random_seeds(seed):
    assert propchecks.fixed_set_tail(seed) == []


@given(st.integers(0, 10**6))
def test_relaxation_structure_random_seeds(seed):
    assert propchecks.phi_structure(seed) == []


@given(st.integers(0, 10**6))
def test_mc_determinism_random_seeds(seed):
    assert propchecks.mc_worker_determinism(seed) == []


def test_mc_estimate_is_reproducible():
    inst = gen_random(4, 3, 3, 5, "positive-w").instance
    pol = build_skc(inst)
    a = estimate_profit_mc(pol, inst, 20_000, 11)
    b = estimate_profit_mc(pol, inst, 20_000, 11, workers=3)
    assert a == b
    assert estimate_profit_mc(pol, inst, 20_000, 12) != a
