"""Running policies: single sampled runs, exact expectations and Monte Carlo.

Semantics of one step ``(i, j)``: the cost of choice ``j`` is paid, a size is
drawn, and the job fits iff the cumulative size stays <= budget.  A fitting
job earns the item's value; an overflowing job earns nothing (or its value in
the overflow-collecting model) and ends the run.  Choosing the null choice is
a no-op.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import NULL_CHOICE, MskcInstance, checked, to_rational, truncated_mean
from .policies import InvalidPolicy, StateSpaceTooLarge, Step, VirtualStep, branches

DEFAULT_STATE_CAP = 10**6

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_K_TRIAL = 0xD1B54A32D192ED03
_K_STEP = 0x8CB92BA72F3D8DD7


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _M64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _M64
    return z ^ (z >> 31)


def uniform(seed: int, trial: int, step: int) -> float:
    """Counter-based uniform in [0, 1) keyed by ``(seed, trial, step)``."""
    h = _mix64((seed * _GOLDEN + _GOLDEN) & _M64)
    h = _mix64((h + trial * _K_TRIAL) & _M64)
    h = _mix64((h + step * _K_STEP) & _M64)
    return (h >> 11) * (1.0 / (1 << 53))


def _mix64_np(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, trials: np.ndarray, step: int) -> np.ndarray:
    """Vectorised :func:`uniform`; bit-identical to the scalar version."""
    with np.errstate(over="ignore"):
        h0 = np.uint64(_mix64((seed * _GOLDEN + _GOLDEN) & _M64))
        h = _mix64_np(h0 + trials.astype(np.uint64) * np.uint64(_K_TRIAL))
        h = _mix64_np(h + np.uint64((step * _K_STEP) & _M64))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


class CounterStream:
    """The uniform stream of one Monte Carlo trial."""

    def __init__(self, seed: int, trial: int):
        self.seed, self.trial, self.step = seed, trial, 0

    def random(self) -> float:
        u = uniform(self.seed, self.trial, self.step)
        self.step += 1
        return u


class Reason(enum.Enum):
    OVERFLOW = "Overflow"
    POLICY_STOP = "PolicyStop"
    EXHAUSTED = "Exhausted"


@dataclass(frozen=True)
class TraceStep:
    item: int
    choice: int
    size: Fraction
    completed: bool


@dataclass
class ExecutionTrace:
    steps: list = field(default_factory=list)
    reason: Reason = Reason.EXHAUSTED
    profit: Fraction = Fraction(0)
    float_profit: float = 0.0

    def to_json(self):
        return {
            "steps": [
                {"item": s.item, "choice": s.choice, "size": str(s.size), "completed": s.completed}
                for s in self.steps
            ],
            "reason": self.reason.value,
            "profit": str(self.profit),
        }


@dataclass(frozen=True)
class ProfitEstimate:
    mean: float
    half_width_95: float
    trials: int
    seed: int

    def to_json(self):
        return {"mean": self.mean, "half_width_95": self.half_width_95, "trials": self.trials, "seed": self.seed}


def _check_step(inst, step):
    if not 0 <= step.item < len(inst.items):
        raise InvalidPolicy(f"policy references missing item {step.item}")
    if not 0 <= step.choice < len(inst.items[step.item].choices):
        raise InvalidPolicy(f"policy references missing choice {step.choice} of item {step.item}")


def _pick_branch(step, u):
    """Resolve a virtual step with uniform ``u``; returns (Step, rescaled u)."""
    if isinstance(step, VirtualStep) and step.pick is None:
        (j1, j2), (x1, _) = step.choices, step.weights
        x1f = float(x1)
        if u < x1f:
            return Step(step.item, j1), u / x1f
        return Step(step.item, j2), (u - x1f) / (1.0 - x1f)
    if isinstance(step, VirtualStep):
        return Step(step.item, step.pick), u
    return step, u


def _sample_atom(dist, u):
    acc = 0.0
    for s, p in dist.atoms:
        acc += float(p)
        if u < acc:
            return s
    return dist.atoms[-1][0]


def execute(policy, inst: MskcInstance, rng, *, overflow_collecting: bool = False, budget=None) -> ExecutionTrace:
    """One run of ``policy``; ``rng`` is anything with a ``random()`` method."""
    budget = inst.budget if budget is None else to_rational(budget)
    trace = ExecutionTrace()
    state = policy.initial_state()
    used = Fraction(0)
    for _ in range(len(inst.items) + 1):
        step = policy.decide(state, used)
        if step is None:
            exhausted = getattr(policy, "is_exhausted", None)
            trace.reason = Reason.EXHAUSTED if exhausted and exhausted(state) else Reason.POLICY_STOP
            return trace
        u = rng.random()
        real, u = _pick_branch(step, u)
        _check_step(inst, real)
        if real.choice == NULL_CHOICE:
            state = policy.advance(state, real, Fraction(0))
            continue
        item = inst.items[real.item]
        ch = item.choices[real.choice]
        size = _sample_atom(ch.dist, u)
        fits = used + size <= budget
        gain = item.value if (fits or overflow_collecting) else Fraction(0)
        trace.profit += gain - ch.cost
        trace.float_profit += (float(item.value) if (fits or overflow_collecting) else 0.0) - float(ch.cost)
        trace.steps.append(TraceStep(real.item, real.choice, size, fits))
        if not fits:
            trace.reason = Reason.OVERFLOW
            return trace
        used += size
        state = policy.advance(state, real, size)
    raise InvalidPolicy("policy attempted more steps than there are items")


def _default_gain(item, ch, b, overflow_collecting):
    fit = sum((p for s, p in ch.dist.atoms if s <= b), Fraction(0))
    return (item.value if overflow_collecting else item.value * fit) - ch.cost


def _run_exact(policy, inst, budget, overflow_collecting, cap, gain):
    layer = {(policy.initial_state(), Fraction(0)): Fraction(1)}
    total = Fraction(0)
    for _ in range(len(inst.items) + 1):
        if not layer:
            return total
        if len(layer) > cap:
            raise StateSpaceTooLarge(f"{len(layer)} reachable states exceed cap {cap}")
        nxt = {}
        for (state, used), prob in layer.items():
            step = policy.decide(state, used)
            if step is None:
                continue
            b = budget - used
            for w, real in branches(step):
                _check_step(inst, real)
                pw = prob * w
                if real.choice == NULL_CHOICE:
                    key = (policy.advance(state, real, Fraction(0)), used)
                    nxt[key] = nxt.get(key, Fraction(0)) + pw
                    continue
                item = inst.items[real.item]
                ch = item.choices[real.choice]
                total += pw * gain(real, item, ch, b)
                for s, p in ch.dist.atoms:
                    if s > b:
                        break
                    key = (policy.advance(state, real, s), used + s)
                    nxt[key] = nxt.get(key, Fraction(0)) + pw * p
        for v in nxt.values():
            checked(v)
        checked(total)
        layer = nxt
    if layer and any(policy.decide(s, u) is not None for s, u in layer):
        raise InvalidPolicy("policy attempted more steps than there are items")
    return total


def expected_profit_exact(policy, inst: MskcInstance, *, budget=None, overflow_collecting: bool = False,
                          cap: int = DEFAULT_STATE_CAP) -> Fraction:
    """Exact expected profit by propagating the distribution of (state, used size)."""
    budget = inst.budget if budget is None else to_rational(budget)
    return _run_exact(
        policy, inst, budget, overflow_collecting, cap,
        lambda real, item, ch, b: _default_gain(item, ch, b, overflow_collecting),
    )


def expected_inserted_mu(policy, inst: MskcInstance, *, budget=None, t=None, cap: int = DEFAULT_STATE_CAP) -> Fraction:
    """Expected total truncated size ``E[min(s, t)]`` of the choices a policy attempts."""
    budget = inst.budget if budget is None else to_rational(budget)
    t = budget if t is None else to_rational(t)
    return _run_exact(policy, inst, budget, False, cap, lambda real, item, ch, b: truncated_mean(ch.dist, t))


def expected_profit_contract(policy, ci, contracts: dict, *, cap: int = DEFAULT_STATE_CAP) -> Fraction:
    """Exact expected profit of a policy over (agent, action) pairs in a contract instance.

    Each attempted agent is paid the realised transfer ``t(s)`` of its contract;
    this is computed atom by atom rather than through expected transfers.
    ``contracts`` maps ``(agent, action)`` to :class:`Contract`.
    """
    budget = ci.budget
    layer = {(policy.initial_state(), Fraction(0)): Fraction(1)}
    total = Fraction(0)
    for _ in range(len(ci.agents) + 1):
        if not layer:
            break
        if len(layer) > cap:
            raise StateSpaceTooLarge("too many states")
        nxt = {}
        for (state, used), prob in layer.items():
            step = policy.decide(state, used)
            if step is None:
                continue
            for w, real in branches(step):
                pw = prob * w
                if real.choice == NULL_CHOICE:
                    key = (policy.advance(state, real, Fraction(0)), used)
                    nxt[key] = nxt.get(key, Fraction(0)) + pw
                    continue
                agent = ci.agents[real.item]
                action = agent.actions[real.choice - 1]
                contract = contracts[(real.item, real.choice - 1)]
                for s, p in action.dist.atoms:
                    fits = used + s <= budget
                    total += pw * p * ((agent.value if fits else 0) - contract.pay(s))
                    if fits:
                        key = (policy.advance(state, real, s), used + s)
                        nxt[key] = nxt.get(key, Fraction(0)) + pw * p
        layer = nxt
    return total


def size_distribution(dists) -> dict:
    """Exact distribution of the sum of independent sizes, as {size: prob}."""
    out = {Fraction(0): Fraction(1)}
    for d in dists:
        nxt = {}
        for a, pa in out.items():
            for s, p in d.atoms:
                nxt[a + s] = nxt.get(a + s, Fraction(0)) + pa * p
        out = nxt
    return out


# ---------------------------------------------------------------------------
# Monte Carlo


class _Compiled:
    """Sizes on a common integer grid plus float probability tables."""

    def __init__(self, inst, budget):
        den = budget.denominator
        for item in inst.items:
            for ch in item.choices:
                for s in ch.dist.sizes:
                    den = math.lcm(den, s.denominator)
        self.den = den
        self.budget_int = int(budget * den)
        top = self.budget_int
        for item in inst.items:
            top += max(int(s * den) for ch in item.choices for s in ch.dist.sizes)
        if top >= 1 << 62:
            raise OverflowError("sizes do not fit a 64-bit grid")
        self.table = {}
        for i, item in enumerate(inst.items):
            for j, ch in enumerate(item.choices):
                cum = np.cumsum([float(p) for p in ch.dist.probs])
                cum[-1] = np.inf
                self.table[(i, j)] = (
                    np.array([int(s * den) for s in ch.dist.sizes], dtype=np.int64),
                    cum,
                    float(item.value),
                    float(ch.cost),
                    ch.dist.sizes,
                )


def _simulate_batch(policy, inst, comp, seed, lo, hi, overflow_collecting):
    n_trials = hi - lo
    profit = np.zeros(n_trials)
    groups = {policy.initial_state(): (np.arange(n_trials), np.zeros(n_trials, dtype=np.int64))}
    r = 0
    while groups:
        if r > len(inst.items):
            raise InvalidPolicy("policy attempted more steps than there are items")
        nxt = {}

        def push(state, idx, used):
            if state in nxt:
                nxt[state][0].append(idx)
                nxt[state][1].append(used)
            else:
                nxt[state] = ([idx], [used])

        for state, (idx, used) in groups.items():
            if not len(idx):
                continue
            parts = _decide_batch(policy, state, used, comp.den)
            for step, mask in parts:
                if step is None:
                    continue
                sidx, sused = idx[mask], used[mask]
                u = uniforms(seed, sidx + lo, r)
                for real, sel, uu in _split_virtual(step, u):
                    _check_step(inst, real)
                    bidx, bused = sidx[sel], sused[sel]
                    if real.choice == NULL_CHOICE:
                        push(policy.advance(state, real, Fraction(0)), bidx, bused)
                        continue
                    sizes, cum, val, cost, fsizes = comp.table[(real.item, real.choice)]
                    k = np.searchsorted(cum, uu, side="right")
                    new_used = bused + sizes[k]
                    fits = new_used <= comp.budget_int
                    if overflow_collecting:
                        profit[bidx] += val - cost
                    else:
                        profit[bidx] += np.where(fits, val, 0.0) - cost
                    for a in np.unique(k[fits]):
                        sel2 = fits & (k == a)
                        push(policy.advance(state, real, fsizes[a]), bidx[sel2], new_used[sel2])
        groups = {s: (np.concatenate(a), np.concatenate(b)) for s, (a, b) in nxt.items()}
        r += 1
    return profit


def _decide_batch(policy, state, used, den):
    rule = getattr(policy, "rule", None)
    if rule is not None and hasattr(rule, "stop_mask"):
        steps = policy.order.steps
        if state >= len(steps):
            return [(None, None)]
        stop = rule.stop_mask(state, used, den)
        return [(steps[state], ~stop)]
    if not policy.uses_capacity:
        return [(policy.decide(state, None), np.ones(len(used), dtype=bool))]
    out = []
    for u in np.unique(used):
        out.append((policy.decide(state, Fraction(int(u), den)), used == u))
    return out


def _split_virtual(step, u):
    if isinstance(step, VirtualStep) and step.pick is None:
        (j1, j2), (x1, _) = step.choices, step.weights
        x1f = float(x1)
        low = u < x1f
        return [
            (Step(step.item, j1), low, u[low] / x1f),
            (Step(step.item, j2), ~low, (u[~low] - x1f) / (1.0 - x1f)),
        ]
    if isinstance(step, VirtualStep):
        step = Step(step.item, step.pick)
    return [(step, np.ones(len(u), dtype=bool), u)]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("KC_WORKERS", "1")))
    except ValueError:
        return 1


def simulate_profits(policy, inst: MskcInstance, trials: int, seed: int, *, overflow_collecting: bool = False,
                     budget=None, workers: int | None = None, chunk: int = 100_000) -> np.ndarray:
    """Per-trial realised profits, in trial order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    budget = inst.budget if budget is None else to_rational(budget)
    workers = worker_count() if workers is None else max(1, workers)
    try:
        comp = _Compiled(inst, budget)
    except OverflowError:
        comp = None
    if comp is None:
        out = np.empty(trials)
        for k in range(trials):
            out[k] = execute(policy, inst, CounterStream(seed, k), overflow_collecting=overflow_collecting,
                             budget=budget).float_profit
        return out
    bounds = [(lo, min(trials, lo + chunk)) for lo in range(0, trials, chunk)]
    run = lambda b: _simulate_batch(policy, inst, comp, seed, b[0], b[1], overflow_collecting)
    if workers == 1 or len(bounds) == 1:
        parts = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, bounds))
    return np.concatenate(parts)


def estimate_profit_mc(policy, inst: MskcInstance, trials: int, seed: int, *, overflow_collecting: bool = False,
                       budget=None, workers: int | None = None) -> ProfitEstimate:
    """Monte Carlo estimate; identical for any worker count given the same seed."""
    prof = simulate_profits(policy, inst, trials, seed, overflow_collecting=overflow_collecting,
                            budget=budget, workers=workers)
    mean = float(np.mean(prof))
    sd = float(np.std(prof, ddof=1)) if trials > 1 else 0.0
    return ProfitEstimate(mean, 1.96 * sd / math.sqrt(trials), trials, seed)
