"""Policy representations and the constructions that build them.

Every policy speaks one small protocol used by the engine:

* ``initial_state()`` returns a hashable state;
* ``decide(state, used)`` returns the next step, or ``None`` to stop, given the
  cumulative realised size ``used`` so far;
* ``advance(state, step, size)`` returns the state after ``step`` completed
  with realised ``size``;
* ``uses_capacity`` says whether ``decide`` looks at ``used`` at all, which
  lets the engine share work between runs that differ only in size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .contracts import compute_ior
from .core import NULL_CHOICE, MskcInstance, choice_size, choice_weight, to_rational
from .lp_phi import solve_phi


class StateSpaceTooLarge(RuntimeError):
    pass


class InvalidPolicy(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    item: int
    choice: int


@dataclass(frozen=True)
class VirtualStep:
    """An item mixed between two choices with probabilities ``weights``.

    When ``pick`` is set the mix has been derandomised and the step behaves
    like ``Step(item, pick)``.
    """

    item: int
    choices: tuple[int, int]
    weights: tuple[Fraction, Fraction]
    pick: int | None = None

    def __post_init__(self):
        a, b = self.weights
        if not (0 < a < 1 and 0 < b < 1 and a + b == 1):
            raise ValueError("mixing weights must lie in (0, 1) and sum to 1")
        if self.pick is not None and self.pick not in self.choices:
            raise ValueError("pick must be one of the mixed choices")

    def resolved(self):
        return Step(self.item, self.pick) if self.pick is not None else self


def branches(step) -> list:
    """``[(prob, Step)]`` realisations of a possibly virtual step."""
    if isinstance(step, VirtualStep):
        if step.pick is not None:
            return [(Fraction(1), Step(step.item, step.pick))]
        return [(w, Step(step.item, j)) for j, w in zip(step.choices, step.weights)]
    return [(Fraction(1), step)]


def _check_steps(steps):
    seen = set()
    for s in steps:
        if not isinstance(s, (Step, VirtualStep)):
            raise InvalidPolicy(f"not a step: {s!r}")
        if s.item in seen:
            raise InvalidPolicy(f"item {s.item} appears twice")
        seen.add(s.item)


@dataclass(frozen=True)
class NonAdaptivePolicy:
    steps: tuple
    info: dict = field(default_factory=dict, compare=False)

    uses_capacity = False

    def __init__(self, steps: Sequence, info: dict | None = None):
        steps = tuple(steps)
        _check_steps(steps)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "info", dict(info or {}))

    def initial_state(self):
        return 0

    def decide(self, state, used):
        return self.steps[state] if state < len(self.steps) else None

    def advance(self, state, step, size):
        return state + 1

    def is_exhausted(self, state):
        return state >= len(self.steps)

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class BudgetThreshold:
    """Stop once the cumulative realised size strictly exceeds ``theta``."""

    theta: Fraction

    def __init__(self, theta):
        object.__setattr__(self, "theta", to_rational(theta))

    def should_stop(self, pos, used) -> bool:
        return used > self.theta

    def stop_mask(self, pos, used_int, denom):
        # used / denom > theta  <=>  used * theta.den > theta.num * denom
        return used_int * self.theta.denominator > self.theta.numerator * denom


class ValueTable:
    """Exact continuation values ``cont[(pos, remaining)]`` of a fixed order.

    The rule stops at ``pos`` with ``remaining`` capacity exactly when the
    continuation value is <= 0.
    """

    def __init__(self, cont: dict, budget: Fraction, value: Fraction):
        self.cont = cont
        self.budget = budget
        self.value = value

    def continuation(self, pos, used):
        return self.cont[(pos, self.budget - used)]

    def should_stop(self, pos, used) -> bool:
        return self.continuation(pos, used) <= 0

    def stop_mask(self, pos, used_int, denom):
        out = np.empty(len(used_int), dtype=bool)
        for u in np.unique(used_int):
            out[used_int == u] = self.should_stop(pos, Fraction(int(u), denom))
        return out

    def triples(self):
        return sorted((p, b, v) for (p, b), v in self.cont.items())


class GridValueTable:
    """Float continuation values on a uniform size grid.

    Used for long orders where exact rationals grow too large; all sizes and
    the budget must be multiples of ``unit``.  ``cont[pos, r]`` is the value of
    continuing at ``pos`` with ``r`` grid units of capacity left.
    """

    def __init__(self, cont: np.ndarray, unit: Fraction, budget: Fraction):
        self.cont = cont
        self.unit = unit
        self.budget = budget
        self.units = int(budget / unit)
        self.value = float(max(0.0, cont[0, self.units])) if cont.shape[0] else 0.0

    def _index(self, used):
        r = (self.budget - used) / self.unit
        if r.denominator != 1:
            raise ValueError("used size is off the grid")
        return int(r)

    def should_stop(self, pos, used) -> bool:
        return bool(self.cont[pos, self._index(used)] <= 0)

    def stop_mask(self, pos, used_int, denom):
        # used_int counts 1/denom units; the grid unit must be a multiple of it
        step = self.unit * denom
        if step.denominator != 1:
            raise ValueError("grid unit finer than the size denominator")
        rem = (self.units * int(step) - used_int) // int(step)
        return self.cont[pos, rem] <= 0


@dataclass(frozen=True)
class StoppingTimePolicy:
    order: NonAdaptivePolicy
    rule: object

    uses_capacity = True

    def initial_state(self):
        return 0

    def decide(self, state, used):
        if state >= len(self.order.steps):
            return None
        if self.rule.should_stop(state, used):
            return None
        return self.order.steps[state]

    def advance(self, state, step, size):
        return state + 1

    def is_exhausted(self, state):
        return state >= len(self.order.steps)

    @property
    def info(self):
        return self.order.info


class AdaptivePolicyTable:
    """Fully adaptive policy backed by a lookup function.

    ``lookup(used_items, remaining)`` returns a :class:`Step` or ``None``; the
    state is the frozenset of items already attempted.
    """

    uses_capacity = True

    def __init__(self, lookup, budget: Fraction, entries: dict | None = None):
        self._lookup = lookup
        self.budget = budget
        self.entries = entries if entries is not None else {}

    def initial_state(self):
        return frozenset()

    def decide(self, state, used):
        step = self._lookup(state, self.budget - used)
        if step is not None and step.item in state:
            raise InvalidPolicy(f"table reuses item {step.item}")
        return step

    def advance(self, state, step, size):
        return state | {step.item}


@dataclass
class OrderedDpTable:
    delta: Fraction
    units: int
    values: list  # values[i][k] for i in 0..n, k in 0..units
    argmax: list  # argmax[i][k] is a choice index, NULL_CHOICE for skip
    work: int
    rounded: list = field(default_factory=list)  # per item, per choice: {units: prob}

    def value(self) -> Fraction:
        return self.values[0][self.units]


class OrderedAdaptivePolicy:
    """Executes an :class:`OrderedDpTable` by tracking rounded remaining capacity."""

    uses_capacity = False

    def __init__(self, table: OrderedDpTable):
        self.table = table

    def initial_state(self):
        return (0, self.table.units)

    def decide(self, state, used):
        i, k = state
        if k < 0:
            return None
        n = len(self.table.argmax)
        while i < n and self.table.argmax[i][k] == NULL_CHOICE:
            i += 1
        if i >= n:
            return None
        return Step(i, self.table.argmax[i][k])

    def advance(self, state, step, size):
        return (step.item + 1, state[1] - math.floor(size / self.table.delta))


class TypeLadderPolicy:
    """Walk through groups of interchangeable jobs, one group at a time.

    Within a group, keep going while jobs finish instantly; move to the next
    group when a job realises the group's ``advance_size``; stop on anything
    else.  Running out of copies also moves on.
    """

    uses_capacity = False

    def __init__(self, groups: Sequence[Sequence[int]], advance_sizes: Sequence, choice: int = 1):
        if len(groups) != len(advance_sizes):
            raise ValueError("one advance size per group")
        self.groups = [list(g) for g in groups]
        self.advance_sizes = [to_rational(a) for a in advance_sizes]
        self.choice = choice

    def initial_state(self):
        return (0, 0)

    def decide(self, state, used):
        if state is None:
            return None
        g, k = state
        while g < len(self.groups) and k >= len(self.groups[g]):
            g, k = g + 1, 0
        if g >= len(self.groups):
            return None
        return Step(self.groups[g][k], self.choice)

    def advance(self, state, step, size):
        g, k = state
        while k >= len(self.groups[g]):
            g, k = g + 1, 0
        if size == 0:
            return (g, k + 1)
        if size == self.advance_sizes[g]:
            return (g + 1, 0)
        return None


# ---------------------------------------------------------------------------
# constructions


def _density_key(c):
    # zero-size candidates first, then decreasing w/mu; ties by item, choice
    w, mu = c["w"], c["mu"]
    if mu == 0:
        return (0, Fraction(0), c["item"], c["choice"])
    return (1, -(w / mu), c["item"], c["choice"])


def _candidates(inst, sol, t):
    out = []
    frac = sol.fractional
    for i, item in enumerate(inst.items):
        if frac is not None and frac.item == i:
            (j1, j2), (x1, x2) = frac.choices, frac.weights
            w = x1 * choice_weight(item, j1, t) + x2 * choice_weight(item, j2, t)
            mu = x1 * choice_size(item, j1, t) + x2 * choice_size(item, j2, t)
            out.append({"item": i, "choice": j2, "w": w, "mu": mu,
                        "step": VirtualStep(i, (j1, j2), (x1, x2))})
            continue
        for j, v in sol.item_choices(i):
            if j != NULL_CHOICE:
                out.append({"item": i, "choice": j, "w": choice_weight(item, j, t),
                            "mu": choice_size(item, j, t), "step": Step(i, j)})
    return out


def _derandomize(steps, evaluate):
    steps = list(steps)
    for pos, s in enumerate(steps):
        if isinstance(s, VirtualStep) and s.pick is None:
            best = None
            for j in s.choices:
                trial = steps.copy()
                trial[pos] = VirtualStep(s.item, s.choices, s.weights, j)
                val = evaluate(NonAdaptivePolicy(trial))
                if best is None or val > best[0]:
                    best = (val, j)
            steps[pos] = VirtualStep(s.item, s.choices, s.weights, best[1])
    return steps


def _skc_core(inst, t, threshold_fn, derandomize, evaluate, label):
    sol = solve_phi(inst, t)
    cands = _candidates(inst, sol, t)
    threshold = threshold_fn(sol.value)
    info = {"algorithm": label, "t": t, "phi": sol.value, "threshold": threshold}
    if not cands:
        info["branch"] = "empty"
        return NonAdaptivePolicy([], info)
    top = max(cands, key=lambda c: (c["w"], -c["item"]))
    info["w_max"] = top["w"]
    if top["w"] > threshold:
        info["branch"] = "single"
        steps = [top["step"]]
    else:
        info["branch"] = "density"
        steps = [c["step"] for c in sorted(cands, key=_density_key)]
        info["density"] = [(c["item"], c["w"], c["mu"]) for c in sorted(cands, key=_density_key)]
    if derandomize:
        try:
            steps = _derandomize(steps, evaluate)
        except StateSpaceTooLarge:
            # fall back to the sub-choice with the larger profit proxy
            item_of = inst.items
            steps = [
                VirtualStep(s.item, s.choices, s.weights,
                            max(s.choices, key=lambda j: (choice_weight(item_of[s.item], j, t), -j)))
                if isinstance(s, VirtualStep) else s
                for s in steps
            ]
            info["derandomized_by"] = "weight"
    return NonAdaptivePolicy(steps, info)


def build_skc(inst: MskcInstance, derandomize: bool = True) -> NonAdaptivePolicy:
    """Relaxation-guided non-adaptive policy with an IOR-dependent threshold."""
    from .engine import expected_profit_exact

    alpha = compute_ior(inst)
    pol = _skc_core(
        inst,
        inst.budget,
        lambda phi: phi / (4 * (1 + alpha)),
        derandomize,
        lambda p: expected_profit_exact(p, inst),
        "skc",
    )
    pol.info["alpha"] = alpha
    return pol


def build_skc_of(inst: MskcInstance, t=None, derandomize: bool = True) -> NonAdaptivePolicy:
    """Same construction at truncation ``t`` with threshold ``Phi(t)/4``.

    Derandomisation scores candidates in the overflow-collecting model at
    budget ``t``, the model this variant is analysed in.
    """
    from .engine import expected_profit_exact

    t = inst.budget if t is None else to_rational(t)
    if t <= 0:
        raise ValueError("t must be positive")
    return _skc_core(
        inst,
        t,
        lambda phi: phi / 4,
        derandomize,
        lambda p: expected_profit_exact(p, inst, budget=t, overflow_collecting=True),
        "skc-of",
    )


def build_skc_bound(inst: MskcInstance, delta, derandomize: bool = True) -> StoppingTimePolicy:
    """The ``t = delta`` order above, stopped once realised size exceeds ``delta``."""
    from .engine import expected_profit_exact

    delta = to_rational(delta)
    if not 0 < delta <= inst.budget:
        raise ValueError("delta must lie in (0, budget]")
    rule = BudgetThreshold(delta)
    order = _skc_core(
        inst,
        delta,
        lambda phi: phi / 4,
        derandomize,
        lambda p: expected_profit_exact(StoppingTimePolicy(p, rule), inst),
        "skc-bound",
    )
    return StoppingTimePolicy(order, rule)


def _rounded_units(dist, delta):
    out = {}
    for s, p in dist.atoms:
        u = math.floor(s / delta)
        out[u] = out.get(u, Fraction(0)) + p
    return out


def build_ordered_adaptive(inst: MskcInstance, eps):
    """Discretised DP over the given item order.

    Sizes are rounded down to multiples of ``delta = eps * budget / n`` and the
    DP is solved exactly for the rounded sizes.  The returned policy is meant
    to run with capacity ``(1 + eps) * budget``.
    """
    eps = to_rational(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = len(inst.items)
    B = inst.budget
    if n == 0:
        table = OrderedDpTable(eps * B, 0, [[Fraction(0)]], [], 0)
        return table, OrderedAdaptivePolicy(table)
    delta = eps * B / n
    K = math.floor(B / delta)
    values = [None] * (n + 1)
    values[n] = [Fraction(0)] * (K + 1)
    argmax = [None] * n
    rounded = [None] * n
    work = 0
    for i in range(n - 1, -1, -1):
        item = inst.items[i]
        nxt = values[i + 1]
        row = list(nxt)
        arg = [NULL_CHOICE] * (K + 1)
        rounded[i] = {}
        for j in item.real_choices:
            ch = item.choices[j]
            ru = _rounded_units(ch.dist, delta)
            rounded[i][j] = ru
            atoms = sorted(ru.items())
            for k in range(K + 1):
                val = -ch.cost
                for u, p in atoms:
                    if u > k:
                        break
                    val += p * (item.value + nxt[k - u])
                work += k + 1
                if val > row[k]:
                    row[k] = val
                    arg[k] = j
        values[i] = row
        argmax[i] = arg
    table = OrderedDpTable(delta, K, values, argmax, work, rounded)
    return table, OrderedAdaptivePolicy(table)


def _reachable_remaining(inst, steps, budget):
    layers = [{budget}]
    for s in steps:
        nxt = set()
        for _, st in branches(s):
            if st.choice == NULL_CHOICE:
                nxt |= layers[-1]
                continue
            sizes = inst.items[st.item].choices[st.choice].dist.sizes
            for b in layers[-1]:
                for sz in sizes:
                    if sz <= b:
                        nxt.add(b - sz)
        layers.append(nxt)
    return layers


def _step_value_exact(inst, step, b, nxt):
    total = Fraction(0)
    for w, st in branches(step):
        if st.choice == NULL_CHOICE:
            total += w * nxt(b)
            continue
        item = inst.items[st.item]
        ch = item.choices[st.choice]
        val = -ch.cost
        for sz, p in ch.dist.atoms:
            if sz > b:
                break
            val += p * (item.value + nxt(b - sz))
        total += w * val
    return total


def grid_unit(inst: MskcInstance, budget=None) -> Fraction:
    budget = inst.budget if budget is None else to_rational(budget)
    den = budget.denominator
    for item in inst.items:
        for ch in item.choices:
            for s in ch.dist.sizes:
                den = math.lcm(den, s.denominator)
    return Fraction(1, den)


def optimal_stopping_rule(inst: MskcInstance, order: NonAdaptivePolicy, *, exact: bool = True,
                          cap: int = 10**6, budget=None) -> StoppingTimePolicy:
    """Best stopping rule for a fixed order, by backward induction.

    ``exact=False`` switches to a float table on the common size grid, for
    long orders where rational values get unwieldy.
    """
    budget = inst.budget if budget is None else to_rational(budget)
    steps = order.steps
    if exact:
        layers = _reachable_remaining(inst, steps, budget)
        if sum(len(l) for l in layers) > cap:
            raise StateSpaceTooLarge("too many reachable capacities for the stopping table")
        cont = {}
        vals = {b: Fraction(0) for b in layers[-1]}
        for pos in range(len(steps) - 1, -1, -1):
            cur = {}
            nxt_vals = vals
            for b in layers[pos]:
                c = _step_value_exact(inst, steps[pos], b, lambda r: nxt_vals[r])
                cont[(pos, b)] = c
                cur[b] = max(Fraction(0), c)
            vals = cur
        value = vals[budget] if steps else Fraction(0)
        return StoppingTimePolicy(order, ValueTable(cont, budget, value))

    unit = grid_unit(inst, budget)
    units = int(budget / unit)
    if (len(steps) + 1) * (units + 1) > cap:
        raise StateSpaceTooLarge("grid table too large")
    cont = np.zeros((len(steps), units + 1))
    vnext = np.zeros(units + 1)
    for pos in range(len(steps) - 1, -1, -1):
        c = np.zeros(units + 1)
        for w, st in branches(steps[pos]):
            if st.choice == NULL_CHOICE:
                c += float(w) * vnext
                continue
            item = inst.items[st.item]
            ch = item.choices[st.choice]
            part = np.full(units + 1, -float(ch.cost))
            for sz, p in ch.dist.atoms:
                u = int(sz / unit)
                if u > units:
                    continue
                part[u:] += float(p) * (float(item.value) + vnext[: units + 1 - u])
            c += float(w) * part
        cont[pos] = c
        vnext = np.maximum(c, 0.0)
    return StoppingTimePolicy(order, GridValueTable(cont, unit, budget))


# ---------------------------------------------------------------------------
# JSON


def _step_to_json(s):
    if isinstance(s, VirtualStep):
        return {"item": s.item, "choices": list(s.choices), "weights": [str(w) for w in s.weights], "pick": s.pick}
    return [s.item, s.choice]


def _step_from_json(raw):
    if isinstance(raw, list):
        return Step(int(raw[0]), int(raw[1]))
    return VirtualStep(int(raw["item"]), tuple(raw["choices"]), tuple(to_rational(w) for w in raw["weights"]),
                       raw.get("pick"))


def policy_to_dict(policy) -> dict:
    if isinstance(policy, NonAdaptivePolicy):
        return {"type": "nonadaptive", "steps": [_step_to_json(s) for s in policy.steps]}
    if isinstance(policy, StoppingTimePolicy):
        out = {"type": "stopping", "steps": [_step_to_json(s) for s in policy.order.steps]}
        rule = policy.rule
        if isinstance(rule, BudgetThreshold):
            out["rule"] = {"type": "threshold", "theta": str(rule.theta)}
        elif isinstance(rule, ValueTable):
            out["rule"] = {"type": "table", "budget": str(rule.budget), "value": str(rule.value),
                           "triples": [[p, str(b), str(v)] for p, b, v in rule.triples()]}
        else:
            raise InvalidPolicy("only exact stopping rules serialise")
        return out
    if isinstance(policy, OrderedAdaptivePolicy):
        t = policy.table
        return {"type": "ordered", "delta": str(t.delta), "units": t.units, "argmax": t.argmax, "work": t.work,
                "value": str(t.value())}
    raise InvalidPolicy(f"cannot serialise {type(policy).__name__}")


def policy_from_dict(data: dict):
    kind = data.get("type")
    if kind == "nonadaptive":
        return NonAdaptivePolicy([_step_from_json(s) for s in data["steps"]])
    if kind == "stopping":
        order = NonAdaptivePolicy([_step_from_json(s) for s in data["steps"]])
        r = data["rule"]
        if r["type"] == "threshold":
            return StoppingTimePolicy(order, BudgetThreshold(r["theta"]))
        cont = {(int(p), to_rational(b)): to_rational(v) for p, b, v in r["triples"]}
        return StoppingTimePolicy(order, ValueTable(cont, to_rational(r["budget"]), to_rational(r["value"])))
    if kind == "ordered":
        # values beyond the root are not stored; the policy only needs argmax
        units = int(data["units"])
        values = [[Fraction(0)] * units + [to_rational(data["value"])]]
        table = OrderedDpTable(to_rational(data["delta"]), units, values, [list(r) for r in data["argmax"]],
                               int(data["work"]))
        return OrderedAdaptivePolicy(table)
    raise InvalidPolicy(f"unknown policy type {kind!r}")
