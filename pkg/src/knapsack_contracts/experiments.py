"""Reproduction presets: each one instantiates a family of bounds at finite size.

A preset is a list of cells; a cell computes a few quantities and emits rows
``(quantity, value, relation, bound, pass)``.  Cells are independent, so they
can run in a process pool; the report keeps them in cell order.
"""

from __future__ import annotations

import csv
import json
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .contracts import compute_ior, reduce_to_mskc
from .core import MskcInstance, cdf_at, choice_weight, format_rational, raw_moment
from .engine import (
    estimate_profit_mc,
    expected_profit_contract,
    expected_profit_exact,
    worker_count,
)
from .instances import (
    gen_alpha_gap,
    gen_bounded_gap,
    gen_fully_vs_stop,
    gen_info_gap,
    gen_lp_gap,
    gen_random,
    gen_random_contract,
    info_gap_dists,
    ladder_advance_sizes,
    restrict,
    solve_moment_match,
    type_groups,
)
from .lp_phi import solve_phi
from .oracle import adapt_of_opt, adapt_opt, nonadapt_opt, ordered_adapt_opt
from .policies import (
    NonAdaptivePolicy,
    Step,
    TypeLadderPolicy,
    build_ordered_adaptive,
    build_skc,
    build_skc_bound,
    build_skc_of,
    optimal_stopping_rule,
)

# rational bracket around e, good to 1e-9
E_LOW = Fraction(2718281828, 10**9)
E_HIGH = Fraction(2718281829, 10**9)


@dataclass
class Row:
    criterion: int
    experiment: str
    params: dict
    quantity: str
    value: object
    relation: str
    bound: object
    passed: bool
    seconds: float = 0.0

    def cells(self):
        return {k: _fmt(v) for k, v in asdict(self).items() if k != "params"}


@dataclass
class ExperimentReport:
    experiment: str
    criterion: int
    grid: list
    rows: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_json(self):
        return {
            "experiment": self.experiment,
            "criterion": self.criterion,
            "grid": [{k: _fmt(v) for k, v in kw.items()} for kw in self.grid],
            "passed": self.passed,
            "seconds": self.seconds,
            "rows": [dict(r.cells(), params={k: _fmt(v) for k, v in r.params.items()}) for r in self.rows],
        }

    def write(self, out_dir):
        import os

        os.makedirs(out_dir, exist_ok=True)
        keys = sorted({k for r in self.rows for k in r.params})
        with open(os.path.join(out_dir, f"{self.experiment}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["experiment", *keys, "quantity", "value", "bound", "pass", "relation", "criterion", "seconds"])
            for r in self.rows:
                c = r.cells()
                w.writerow([r.experiment, *[_fmt(r.params.get(k, "")) for k in keys], c["quantity"], c["value"],
                            c["bound"], c["passed"], c["relation"], r.criterion, f"{r.seconds:.3f}"])
        with open(os.path.join(out_dir, f"{self.experiment}.json"), "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, Fraction):
        return format_rational(v)
    if isinstance(v, float):
        return repr(v)
    return v if isinstance(v, (str, int, bool)) else str(v)


def holds(value, relation, bound) -> bool:
    if relation == ">=":
        return value >= bound
    if relation == "<=":
        return value <= bound
    if relation == "==":
        return value == bound
    if relation == "<":
        return value < bound
    raise ValueError(relation)


class _Rows:
    def __init__(self, criterion, experiment, params):
        self.crit, self.exp, self.params, self.rows = criterion, experiment, params, []

    def add(self, quantity, value, relation, bound):
        self.rows.append(Row(self.crit, self.exp, dict(self.params), quantity, value, relation, bound,
                             holds(value, relation, bound)))


def w_max(inst: MskcInstance) -> Fraction:
    return max([Fraction(0)] + [choice_weight(it, j, inst.budget) for it in inst.items for j in it.real_choices])


def random_instance(seed, profile, n_max, *, delta=None):
    n = 1 + seed % n_max if profile == "generic" else 2 + seed % (n_max - 1)
    return gen_random(n, 3, 3, seed, profile, delta=delta).instance


# ---------------------------------------------------------------------------
# cells


def cell_skc(seed):
    r = _Rows(1, "skc-bound", {"seed": seed})
    inst = random_instance(seed, "positive-w", 6)
    phi = solve_phi(inst).value
    alpha = compute_ior(inst)
    val = expected_profit_exact(build_skc(inst), inst)
    r.add("E[SKC]", val, ">=", phi / (4 * (1 + alpha)))
    return r.rows


def cell_adapt_phi(seed):
    r = _Rows(2, "adapt-le-2phi", {"seed": seed})
    inst = random_instance(seed, "positive-w", 6)
    phi1 = solve_phi(inst).value
    phi2 = solve_phi(inst, capacity=2 * inst.budget).value
    adapt = adapt_opt(inst).value
    alpha = compute_ior(inst)
    skc = expected_profit_exact(build_skc(inst), inst)
    r.add("ADAPT", adapt, "<=", phi2)
    r.add("Phi(2)", phi2, "<=", 2 * phi1)
    r.add("ADAPT/E[SKC]", adapt / skc, "<=", 8 * (1 + alpha))
    return r.rows


def step_profits(inst, steps):
    """Unconditional expected profit contributed by each step of a fixed sequence."""
    out, prev = [], Fraction(0)
    for k in range(1, len(steps) + 1):
        cur = expected_profit_exact(NonAdaptivePolicy(steps[:k]), inst)
        out.append(cur - prev)
        prev = cur
    return out


def cell_alpha_gap(eps):
    eps = Fraction(eps)
    r = _Rows(3, "alpha-gap", {"eps": eps, "gamma": Fraction(1, 4)})
    bundle = gen_alpha_gap(eps, Fraction(1, 4))
    inst = reduce_to_mskc(bundle.instance).instance
    n = len(inst.items)
    order = NonAdaptivePolicy([Step(i, 1) for i in range(n)])
    stop = optimal_stopping_rule(inst, order)
    stop_val = expected_profit_exact(stop, inst)
    r.add("stop value identity order", stop_val, "==", 1 - (1 - eps) ** n)
    r.add("stop value identity order", stop_val, ">=", 1 - 1 / E_HIGH)
    r.add("alpha", compute_ior(inst), "==", (2 - eps) / eps)
    # any sequence of length >= 2 loses money on its second step, which only
    # depends on the first two jobs
    worst = max(
        step_profits(inst, [Step(i, 1), Step(k, 1)])[1]
        for i in range(n) for k in range(n) if i != k
    )
    r.add("max second-step profit over ordered pairs", worst, "<", Fraction(0))
    single = max(expected_profit_exact(NonAdaptivePolicy([Step(i, 1)]), inst) for i in range(n))
    r.add("best single job", single, "==", eps)
    small = reduce_to_mskc(gen_alpha_gap(eps, Fraction(1, 4), n=6).instance).instance
    na = nonadapt_opt(small).value
    r.add("nonadapt_opt (n=6)", na, "==", eps)
    if n <= 10:
        r.add(f"nonadapt_opt (n={n})", nonadapt_opt(inst, max_items=n).value, "==", eps)
    r.add("stop value / NON_ADAPT", stop_val / single, ">=", (1 - 1 / E_HIGH) / eps)
    return r.rows


def cell_ladder(eps, copies, trials, seed):
    eps = Fraction(eps)
    r = _Rows(4, "fully-vs-stop", {"eps": eps, "copies": copies, "trials": trials, "seed": seed})
    bundle = gen_fully_vs_stop(eps, Fraction(1, 4), copies)
    pol = TypeLadderPolicy(type_groups(bundle), ladder_advance_sizes(bundle))
    est = estimate_profit_mc(pol, bundle.instance, trials, seed)
    target = 0.9 / (2 * math.e)
    r.add("scripted adaptive MC mean - half-width", est.mean - est.half_width_95, ">=", target)
    r.rows[-1].params["mean"] = est.mean
    r.rows[-1].params["half_width"] = est.half_width_95
    return r.rows


def stop_order_estimate(eps, copies, order_seed, trials, seed):
    bundle = gen_fully_vs_stop(eps, Fraction(1, 4), copies)
    inst = bundle.instance
    idx = list(range(len(inst.items)))
    random.Random(order_seed).shuffle(idx)
    order = NonAdaptivePolicy([Step(i, 1) for i in idx])
    pol = optimal_stopping_rule(inst, order, exact=False, cap=10**7)
    est = estimate_profit_mc(pol, inst, trials, seed)
    return est, pol.rule.value


def cell_stop_orders(eps, copies, orders, trials, seed):
    eps = Fraction(eps)
    r = _Rows(4, "fully-vs-stop", {"eps": eps, "copies": copies, "orders": orders, "trials": trials, "seed": seed})
    best = None
    for o in range(orders):
        est, table_value = stop_order_estimate(eps, copies, o, trials, seed)
        if best is None or est.mean > best[0].mean:
            best = (est, table_value, o)
    est, table_value, o = best
    r.add("best random stopping order MC mean", est.mean, "<=", float(4 * eps) + 3 * est.half_width_95)
    r.rows[-1].params.update({"best_order_seed": o, "half_width": est.half_width_95, "table_value": table_value})
    return r.rows


def cell_info_gap(k, eps, delta, copies):
    eps, delta = Fraction(eps), Fraction(delta)
    r = _Rows(5, "info-gap", {"k": k, "eps": eps, "delta": delta, "copies": copies})
    p = solve_moment_match(k, eps, delta)
    r.add("min p_j", min(p), ">=", Fraction(0))
    good, bad = info_gap_dists(k, eps, delta)
    for m in range(1, k + 1):
        r.add(f"moment {m} difference", raw_moment(good, m) - raw_moment(bad, m), "==", Fraction(0))
    r.add("cdf_at(1) difference", cdf_at(good, 1) - cdf_at(bad, 1), "==", Fraction(0))
    bundle = gen_info_gap(k, eps, delta, copies)
    inst = bundle.instance
    alpha = compute_ior(inst)
    adapt = adapt_opt(restrict(inst, range(copies))).value
    r.add("ADAPT on good copies", adapt, ">=", Fraction(1, 2))
    one_bad = expected_profit_exact(NonAdaptivePolicy([Step(copies, 1)]), inst)
    r.add("insert one bad item", one_bad, "==", eps)
    r.add("ADAPT / one bad item", adapt / one_bad, ">=", alpha / 8)
    return r.rows


def cell_skc_bound_delta(seed, delta):
    delta = Fraction(delta)
    r = _Rows(6, "skc-bound-delta", {"seed": seed, "delta": delta})
    inst = random_instance(seed, "bounded", 6, delta=delta)
    phi = solve_phi(inst, delta).value
    val = expected_profit_exact(build_skc_bound(inst, delta), inst)
    r.add("E[SKC-BOUND]", val, ">=", phi / 8)
    return r.rows


def cell_overflow(seed):
    r = _Rows(7, "overflow-9approx", {"seed": seed})
    inst = random_instance(seed, "generic", 5)
    adapt_of = adapt_of_opt(inst).value
    phi = solve_phi(inst).value
    skc_of = expected_profit_exact(build_skc_of(inst, 1), inst, overflow_collecting=True)
    r.add("ADAPT_OF", adapt_of, "<=", 2 * phi + w_max(inst))
    r.add("ADAPT_OF", adapt_of, "<=", 9 * skc_of)
    return r.rows


def cell_ordered(seed, eps):
    eps = Fraction(eps)
    r = _Rows(8, "ordered-dp", {"seed": seed, "eps": eps})
    inst = random_instance(seed, "generic", 5)
    table, pol = build_ordered_adaptive(inst, eps)
    val = expected_profit_exact(pol, inst, budget=(1 + eps) * inst.budget)
    r.add("E[ordered DP, capacity 1+eps] - ADAPT", val - adapt_opt(inst).value, ">=", Fraction(0))
    r.add("E[ordered DP, capacity 1+eps] - ordered ADAPT", val - ordered_adapt_opt(inst).value, ">=", Fraction(0))
    mono = all(row[k] <= row[k + 1] for row in table.values for k in range(len(row) - 1))
    skip = all(a >= b for i in range(len(table.values) - 1) for a, b in zip(table.values[i], table.values[i + 1]))
    r.add("D non-decreasing in k and >= skip", int(mono and skip), "==", 1)
    return r.rows


def cell_dp_scaling(seed):
    r = _Rows(8, "ordered-dp", {"seed": seed, "scaling": "cells"})
    base = gen_random(4, 3, 3, seed).instance
    doubled = MskcInstance(list(base.items) * 2, base.budget)
    w = {}
    for name, inst in (("n", base), ("2n", doubled)):
        for eps in (Fraction(1, 2), Fraction(1, 4)):
            w[(name, eps)] = build_ordered_adaptive(inst, eps)[0].work
    for eps in (Fraction(1, 2), Fraction(1, 4)):
        ratio = Fraction(w[("2n", eps)], w[("n", eps)])
        r.add(f"work(2n)/work(n) / 8 at eps={eps}", ratio / 8, "<=", Fraction(2))
        r.add(f"work(2n)/work(n) / 8 at eps={eps}", ratio / 8, ">=", Fraction(1, 2))
    for name in ("n", "2n"):
        ratio = Fraction(w[(name, Fraction(1, 4))], w[(name, Fraction(1, 2))])
        r.add(f"work(eps/2)/work(eps) / 4 at {name}", ratio / 4, "<=", Fraction(2))
        r.add(f"work(eps/2)/work(eps) / 4 at {name}", ratio / 4, ">=", Fraction(1, 2))
    return r.rows


def cell_lp_gap(eps, copies):
    eps = Fraction(eps)
    r = _Rows(9, "lp-gap", {"eps": eps, "copies": copies})
    inst = gen_lp_gap(eps, copies).instance
    phi = solve_phi(inst).value
    adapt = adapt_opt(inst).value
    r.add("Phi(1)", phi, ">=", Fraction(1, 2))
    r.add("ADAPT", adapt, "==", eps)
    r.add("Phi(1)/ADAPT", phi / adapt, ">=", Fraction(5))
    return r.rows


class Relabeled:
    """Wraps a policy on a reduced instance so that its steps name (agent, action + 1)."""

    def __init__(self, policy, mapping):
        self.policy, self.mapping = policy, mapping
        self.uses_capacity = policy.uses_capacity

    def initial_state(self):
        return self.policy.initial_state()

    def decide(self, state, used):
        step = self.policy.decide(state, used)
        if step is None:
            return None
        return Step(step.item, self.mapping[(step.item, step.choice)].action + 1)

    def advance(self, state, step, size):
        return self.policy.advance(state, None, size)


def random_policy(inst, rng):
    items = list(range(len(inst.items)))
    rng.shuffle(items)
    items = items[: rng.randint(1, len(items))]
    return NonAdaptivePolicy([Step(i, rng.choice(list(inst.items[i].real_choices))) for i in items])


def cell_reduction(seed):
    r = _Rows(10, "reduction-equiv", {"seed": seed})
    ci = gen_random_contract(1 + seed % 4, 3, 3, seed).instance
    red = reduce_to_mskc(ci)
    rng = random.Random(seed)
    pol = random_policy(red.instance, rng)
    if seed % 2:
        pol = optimal_stopping_rule(red.instance, pol)
    contracts = {(inc.agent, inc.action): inc.contract for inc in red.mapping.values()}
    a = expected_profit_exact(pol, red.instance)
    b = expected_profit_contract(Relabeled(pol, red.mapping), ci, contracts)
    r.add("reduced minus direct profit", a - b, "==", Fraction(0))
    return r.rows


def cell_bounded_gap(eps, copies):
    eps = Fraction(eps)
    r = _Rows(11, "bounded-gap", {"eps": eps, "copies": copies})
    inst = gen_bounded_gap(eps, copies).instance
    na = nonadapt_opt(inst).value
    order = NonAdaptivePolicy([Step(i, 1) for i in range(copies)])
    stop = expected_profit_exact(optimal_stopping_rule(inst, order), inst)
    r.add("NON_ADAPT", na, "==", 2 * eps**2)
    r.add("stop value identity order", stop, ">=", 5 * 2 * eps**2)
    return r.rows


# ---------------------------------------------------------------------------
# presets


def _grid(name):
    if name == "skc-bound":
        return 1, [("cell_skc", {"seed": s}) for s in range(50)]
    if name == "adapt-le-2phi":
        return 2, [("cell_adapt_phi", {"seed": s}) for s in range(50)]
    if name == "alpha-gap":
        return 3, [("cell_alpha_gap", {"eps": e}) for e in ("1/10", "1/20")]
    if name == "fully-vs-stop":
        return 4, [
            ("cell_ladder", {"eps": "1/5", "copies": 200, "trials": 10**6, "seed": 2024}),
            ("cell_stop_orders", {"eps": "1/5", "copies": 200, "orders": 20, "trials": 10**5, "seed": 2024}),
        ]
    if name == "info-gap":
        return 5, [("cell_info_gap", {"k": k, "eps": "1/10", "delta": "1/10000", "copies": 6}) for k in (1, 2, 3)]
    if name == "skc-bound-delta":
        return 6, [("cell_skc_bound_delta", {"seed": s, "delta": "1/4"}) for s in range(20)]
    if name == "overflow-9approx":
        return 7, [("cell_overflow", {"seed": s}) for s in range(30)]
    if name == "ordered-dp":
        cells = [("cell_ordered", {"seed": s, "eps": e}) for s in range(20) for e in ("1/2", "1/4")]
        return 8, cells + [("cell_dp_scaling", {"seed": 0})]
    if name == "lp-gap":
        return 9, [("cell_lp_gap", {"eps": "1/10", "copies": 5})]
    if name == "reduction-equiv":
        return 10, [("cell_reduction", {"seed": s}) for s in range(30)]
    if name == "bounded-gap":
        return 11, [("cell_bounded_gap", {"eps": "1/10", "copies": 6})]
    raise KeyError(name)


PRESETS = (
    "skc-bound", "adapt-le-2phi", "alpha-gap", "fully-vs-stop", "info-gap", "skc-bound-delta",
    "overflow-9approx", "ordered-dp", "lp-gap", "reduction-equiv", "bounded-gap",
)


def _run_cell(job):
    fn, params = job
    t0 = time.perf_counter()
    rows = globals()[fn](**params)
    dt = time.perf_counter() - t0
    for row in rows:
        row.seconds = dt
    return rows


def run_preset(name: str, workers: int | None = None) -> ExperimentReport:
    criterion, cells = _grid(name)
    workers = worker_count() if workers is None else workers
    t0 = time.perf_counter()
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_cell, cells))
    else:
        parts = [_run_cell(c) for c in cells]
    report = ExperimentReport(name, criterion, [p for _, p in cells])
    for rows in parts:
        report.rows.extend(rows)
    report.seconds = time.perf_counter() - t0
    return report
