"""Seeded invariant checks shared by the property tests and the acceptance run.

Each check returns a list of failure messages; an empty list means it held.
"""

import random
from fractions import Fraction

import numpy as np

from knapsack_contracts.core import truncated_mean
from knapsack_contracts.engine import expected_inserted_mu, simulate_profits, size_distribution
from knapsack_contracts.instances import gen_random
from knapsack_contracts.lp_phi import check_phi_solution, solve_phi
from knapsack_contracts.oracle import adapt_opt
from knapsack_contracts.policies import build_skc, optimal_stopping_rule


def fixed_set_tail(seed):
    """Markov-type tail bound for a random fixed set of choices with total truncated mean <= t."""
    rng = random.Random(seed)
    inst = gen_random(1 + seed % 6, 3, 3, seed).instance
    t = Fraction(rng.randint(1, 8), 8)
    dists = []
    for item in inst.items:
        dist = item.choices[rng.randrange(1, len(item.choices))].dist
        if sum((truncated_mean(d, t) for d in dists), Fraction(0)) + truncated_mean(dist, t) <= t:
            dists.append(dist)
    mu = sum((truncated_mean(d, t) for d in dists), Fraction(0))
    below = sum((p for s, p in size_distribution(dists).items() if s < t), Fraction(0))
    if below < 1 - mu / t:
        return [f"seed {seed}: Pr[size < {t}] = {below} < 1 - {mu}/{t}"]
    return []


def adaptive_inserted_mass(seed):
    """The optimal adaptive policy attempts at most twice the budget in expected truncated size."""
    inst = gen_random(1 + seed % 5, 3, 3, seed).instance
    res = adapt_opt(inst)
    mu = expected_inserted_mu(res.policy, inst)
    if mu > 2 * inst.budget:
        return [f"seed {seed}: E[mu] = {mu} > 2"]
    return []


def phi_structure(seed):
    """Both solver routes give a checked structured solution with the same value."""
    inst = gen_random(1 + seed % 6, 3, 3, seed).instance
    errs = []
    for t in (Fraction(1, 4), Fraction(1, 2), Fraction(1)):
        for cap in (None, 2 * t):
            a = solve_phi(inst, t, capacity=cap)
            b = solve_phi(inst, t, capacity=cap, method="simplex")
            check_phi_solution(inst, a)
            check_phi_solution(inst, b)
            if a.value != b.value:
                errs.append(f"seed {seed}, t={t}: greedy {a.value} != simplex {b.value}")
    return errs


def mc_worker_determinism(seed):
    inst = gen_random(2 + seed % 4, 3, 3, seed, "positive-w").instance
    pol = optimal_stopping_rule(inst, build_skc(inst))
    base = simulate_profits(pol, inst, 3000, seed, workers=1, chunk=500)
    for w in (2, 4):
        if not np.array_equal(base, simulate_profits(pol, inst, 3000, seed, workers=w, chunk=500)):
            return [f"seed {seed}: {w} workers changed the sample"]
    if not np.array_equal(base, simulate_profits(pol, inst, 3000, seed, workers=1, chunk=500)):
        return [f"seed {seed}: rerun changed the sample"]
    return []


CHECKS = {
    "fixed-set tail bound": fixed_set_tail,
    "adaptive inserted mass": adaptive_inserted_mass,
    "relaxation structure": phi_structure,
    "monte carlo determinism": mc_worker_determinism,
}


def run_all(seeds=range(100)):
    return {name: [m for s in seeds for m in fn(s)] for name, fn in CHECKS.items()}
