"""Small brute-force reference implementations used only by the tests.

They share no code with the package's evaluators: outcomes are enumerated
as an explicit tree, one realisation at a time.
"""

import itertools
from fractions import Fraction

from knapsack_contracts.core import NULL_CHOICE
from knapsack_contracts.policies import VirtualStep


def tree_profit(policy, inst, *, budget=None, overflow_collecting=False):
    """Expected profit by walking every branch of the outcome tree."""
    budget = inst.budget if budget is None else budget

    def walk(state, used, depth):
        if depth > len(inst.items):
            raise AssertionError("policy ran too long")
        step = policy.decide(state, used)
        if step is None:
            return Fraction(0)
        if isinstance(step, VirtualStep):
            if step.pick is not None:
                options = [(Fraction(1), step.pick)]
            else:
                options = list(zip(step.weights, step.choices))
        else:
            options = [(Fraction(1), step.choice)]
        total = Fraction(0)
        for w, j in options:
            real = type("S", (), {"item": step.item, "choice": j})()
            if j == NULL_CHOICE:
                total += w * walk(policy.advance(state, real, Fraction(0)), used, depth + 1)
                continue
            item = inst.items[step.item]
            ch = item.choices[j]
            for s, p in ch.dist.atoms:
                if used + s <= budget:
                    rest = walk(policy.advance(state, real, s), used + s, depth + 1)
                    total += w * p * (item.value - ch.cost + rest)
                else:
                    total += w * p * ((item.value if overflow_collecting else 0) - ch.cost)
        return total

    return walk(policy.initial_state(), Fraction(0), 0)


def knapsack_with_costs(items, budget):
    """Best deterministic subset: items are (value, cost, size) triples."""
    best = Fraction(0)
    for r in range(len(items) + 1):
        for sub in itertools.combinations(items, r):
            if sum((s for _, _, s in sub), Fraction(0)) <= budget:
                best = max(best, sum((v - c for v, c, _ in sub), Fraction(0)))
    return best


def lp_vertex_max(c, rows):
    """Max of c.x over {A x <= b, x >= 0} in two variables, by vertex enumeration."""
    lines = [(a, b) for a, b in rows] + [((Fraction(-1), Fraction(0)), Fraction(0)),
                                        ((Fraction(0), Fraction(-1)), Fraction(0))]
    best = None
    for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
        det = a1[0] * a2[1] - a1[1] * a2[0]
        if det == 0:
            continue
        x = (b1 * a2[1] - a1[1] * b2) / det
        y = (a1[0] * b2 - b1 * a2[0]) / det
        if all(a[0] * x + a[1] * y <= b for a, b in lines):
            val = c[0] * x + c[1] * y
            best = val if best is None else max(best, val)
    return best
