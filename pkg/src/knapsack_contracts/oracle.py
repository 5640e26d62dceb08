"""Exact optimal values for small instances, by exhaustive search.

These are deliberately exponential and only meant as ground truth for tests
and experiments.  Identical items are grouped into classes so that copies of
one job do not multiply the search space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .core import MskcInstance, to_rational
from .policies import (
    AdaptivePolicyTable,
    NonAdaptivePolicy,
    StateSpaceTooLarge,
    Step,
    optimal_stopping_rule,
)

DEFAULT_ADAPT_ITEMS = 8
DEFAULT_ENUM_ITEMS = 6
DEFAULT_STATE_CAP = 10**6


@dataclass
class OracleResult:
    value: Fraction
    policy: object
    states_explored: int


def _classes(inst):
    """Class id per item; class ids ordered by first occurrence."""
    reps, ids = [], []
    for item in inst.items:
        for c, rep in enumerate(reps):
            if rep == item:
                ids.append(c)
                break
        else:
            reps.append(item)
            ids.append(len(reps) - 1)
    return reps, ids


def _check_size(inst, limit, what):
    if len(inst.items) > limit:
        raise StateSpaceTooLarge(f"{what} is limited to {limit} items, got {len(inst.items)}")


def _step_value(item, ch, b, future, overflow_collecting):
    val = -ch.cost
    for s, p in ch.dist.atoms:
        if s <= b:
            val += p * (item.value + future(b - s))
        elif overflow_collecting:
            val += p * item.value
    return val


def adapt_opt(inst: MskcInstance, overflow_collecting: bool = False, *, max_items: int = DEFAULT_ADAPT_ITEMS,
              cap: int = DEFAULT_STATE_CAP, budget=None) -> OracleResult:
    """Best fully adaptive policy: memoised recursion on (remaining classes, remaining capacity)."""
    _check_size(inst, max_items, "adapt_opt")
    budget = inst.budget if budget is None else to_rational(budget)
    reps, ids = _classes(inst)
    memo = {}

    def solve(counts, b):
        key = (counts, b)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= cap:
            raise StateSpaceTooLarge(f"adapt_opt explored more than {cap} states")
        best, arg = Fraction(0), None
        for c, cnt in enumerate(counts):
            if not cnt:
                continue
            rest = counts[:c] + (cnt - 1,) + counts[c + 1:]
            item = reps[c]
            for j in item.real_choices:
                val = _step_value(item, item.choices[j], b, lambda r: solve(rest, r)[0], overflow_collecting)
                if val > best:
                    best, arg = val, (c, j)
        memo[key] = (best, arg)
        return memo[key]

    full = tuple(ids.count(c) for c in range(len(reps)))
    value = solve(full, budget)[0]

    def lookup(used_items, remaining):
        counts = list(full)
        for i in used_items:
            counts[ids[i]] -= 1
        _, arg = solve(tuple(counts), remaining)
        if arg is None:
            return None
        c, j = arg
        i = min(k for k in range(len(ids)) if ids[k] == c and k not in used_items)
        return Step(i, j)

    return OracleResult(value, AdaptivePolicyTable(lookup, budget, memo), len(memo))


def adapt_of_opt(inst: MskcInstance, **kw) -> OracleResult:
    """Best adaptive policy when an overflowing job still pays its value."""
    return adapt_opt(inst, overflow_collecting=True, **kw)


def _steps_from_classes(seq, ids):
    taken = set()
    steps = []
    for c, j in seq:
        i = min(k for k in range(len(ids)) if ids[k] == c and k not in taken)
        taken.add(i)
        steps.append(Step(i, j))
    return steps


def nonadapt_opt(inst: MskcInstance, *, max_items: int = DEFAULT_ENUM_ITEMS, cap: int = 5 * 10**6,
                 budget=None) -> OracleResult:
    """Best fixed sequence, by depth-first search over sequences of (class, choice).

    A prefix carries the distribution of used size over runs still alive, so
    each extension costs one convolution.  Branches whose optimistic bound
    cannot beat the incumbent are cut; the bound charges every remaining job
    its positive expected gain from the current state.
    """
    _check_size(inst, max_items, "nonadapt_opt")
    budget = inst.budget if budget is None else to_rational(budget)
    reps, ids = _classes(inst)
    counts0 = [ids.count(c) for c in range(len(reps))]
    best = [Fraction(0), ()]
    nodes = [0]

    def optimistic(item, dist):
        # a later step sees less capacity and less alive mass than now, so its
        # positive part is at most what it would earn from the current state
        top = Fraction(0)
        for j in item.real_choices:
            ch = item.choices[j]
            g = Fraction(0)
            for used, pu in dist.items():
                fit = sum((p for s, p in ch.dist.atoms if s <= budget - used), Fraction(0))
                g += pu * max(Fraction(0), item.value * fit - ch.cost)
            top = max(top, g)
        return top

    def dfs(counts, dist, value, seq):
        nodes[0] += 1
        if nodes[0] > cap:
            raise StateSpaceTooLarge(f"nonadapt_opt visited more than {cap} sequences")
        if value > best[0]:
            best[0], best[1] = value, tuple(seq)
        if not dist:
            return
        bound = value + sum(optimistic(reps[c], dist) * k for c, k in enumerate(counts) if k)
        if bound <= best[0]:
            return
        for c, cnt in enumerate(counts):
            if not cnt:
                continue
            item = reps[c]
            counts[c] -= 1
            for j in item.real_choices:
                ch = item.choices[j]
                gain = Fraction(0)
                nxt = {}
                for used, pu in dist.items():
                    b = budget - used
                    gain -= pu * ch.cost
                    for s, p in ch.dist.atoms:
                        if s <= b:
                            gain += pu * p * item.value
                            nxt[used + s] = nxt.get(used + s, Fraction(0)) + pu * p
                seq.append((c, j))
                dfs(counts, nxt, value + gain, seq)
                seq.pop()
            counts[c] += 1

    dfs(counts0, {Fraction(0): Fraction(1)}, Fraction(0), [])
    policy = NonAdaptivePolicy(_steps_from_classes(best[1], ids), {"algorithm": "nonadapt-opt"})
    return OracleResult(best[0], policy, nodes[0])


def _multiset_perms(counts):
    counts = list(counts)
    n = sum(counts)
    out = []

    def rec(prefix):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for c, k in enumerate(counts):
            if k:
                counts[c] -= 1
                prefix.append(c)
                rec(prefix)
                prefix.pop()
                counts[c] += 1

    rec([])
    return out


def stopadapt_opt(inst: MskcInstance, *, max_items: int = DEFAULT_ENUM_ITEMS, cap: int = 2 * 10**6,
                  budget=None) -> OracleResult:
    """Best order with an optimal stopping rule.

    Only full-length orders are searched: appending a job never hurts when the
    rule may stop before it.  Values are memoised on (suffix, capacity).
    """
    _check_size(inst, max_items, "stopadapt_opt")
    budget = inst.budget if budget is None else to_rational(budget)
    reps, ids = _classes(inst)
    counts = [ids.count(c) for c in range(len(reps))]
    memo = {}

    def val(suffix, b):
        if not suffix:
            return Fraction(0)
        key = (suffix, b)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= cap:
            raise StateSpaceTooLarge("stopadapt_opt memo exceeded its cap")
        c, j = suffix[0]
        item = reps[c]
        cont = _step_value(item, item.choices[j], b, lambda r: val(suffix[1:], r), False)
        memo[key] = max(Fraction(0), cont)
        return memo[key]

    best, best_seq, seen = Fraction(-1), (), 0
    for perm in _multiset_perms(counts):
        for js in itertools.product(*[reps[c].real_choices for c in perm]):
            seen += 1
            if seen > cap:
                raise StateSpaceTooLarge("stopadapt_opt candidate count exceeded its cap")
            seq = tuple(zip(perm, js))
            v = val(seq, budget)
            if v > best:
                best, best_seq = v, seq
    order = NonAdaptivePolicy(_steps_from_classes(best_seq, ids), {"algorithm": "stopadapt-opt"})
    policy = optimal_stopping_rule(inst, order, budget=budget)
    if policy.rule.value != best:
        raise ArithmeticError("stopping table disagrees with the search value")
    return OracleResult(max(best, Fraction(0)), policy, len(memo))


class _OrderedOptimal:
    uses_capacity = True

    def __init__(self, solve, n, budget):
        self._solve, self.n, self.budget = solve, n, budget

    def initial_state(self):
        return 0

    def decide(self, state, used):
        b = self.budget - used
        i = state
        while i < self.n:
            _, j = self._solve(i, b)
            if j is not None:
                return Step(i, j)
            i += 1
        return None

    def advance(self, state, step, size):
        return step.item + 1


def ordered_adapt_opt(inst: MskcInstance, *, budget=None, cap: int = DEFAULT_STATE_CAP) -> OracleResult:
    """Best adaptive policy that must respect the given item order (items may be skipped)."""
    budget = inst.budget if budget is None else to_rational(budget)
    n = len(inst.items)
    memo = {}

    def solve(i, b):
        if i >= n:
            return Fraction(0), None
        key = (i, b)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= cap:
            raise StateSpaceTooLarge("ordered_adapt_opt exceeded its cap")
        best, arg = solve(i + 1, b)[0], None
        item = inst.items[i]
        for j in item.real_choices:
            v = _step_value(item, item.choices[j], b, lambda r: solve(i + 1, r)[0], False)
            if v > best:
                best, arg = v, j
        memo[key] = (best, arg)
        return memo[key]

    value = solve(0, budget)[0]
    return OracleResult(value, _OrderedOptimal(solve, n, budget), len(memo))
