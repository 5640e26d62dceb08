"""Instance families, moment matching, random instances and JSON persistence."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .contracts import compute_ior
from .core import (
    ContractAction,
    ContractAgent,
    ContractInstance,
    FiniteDistribution,
    MskcChoice,
    MskcInstance,
    MskcItem,
    cdf_at,
    format_rational,
    to_rational,
)


class ParameterOutOfRange(ValueError):
    pass


class DeltaTooLarge(ValueError):
    """The moment-matching probabilities came out negative; use a smaller delta."""


class ParseError(ValueError):
    pass


def _jsonable(v):
    if isinstance(v, Fraction):
        return format_rational(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


@dataclass
class InstanceBundle:
    instance: object
    family: str
    params: dict = field(default_factory=dict)
    claims: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = _jsonable(self.params)
        self.claims = _jsonable(self.claims)

    @property
    def kind(self) -> str:
        return "contract" if isinstance(self.instance, ContractInstance) else "mskc"


def _r(x, name):
    try:
        return to_rational(x)
    except (TypeError, ValueError) as exc:
        raise ParameterOutOfRange(f"{name}: {exc}") from exc


def _dist(pairs):
    return FiniteDistribution(pairs)


# ---------------------------------------------------------------------------
# gap families


def ladder_sizes(n: int, gamma: Fraction):
    """``a_i = gamma^(n-i+1)`` and ``b_i = 1 - sum_{j<i} a_j`` for i = 1..n."""
    a = [gamma ** (n - i + 1) for i in range(1, n + 1)]
    b = [1 - sum(a[: i - 1], Fraction(0)) for i in range(1, n + 1)]
    return a, b


def gen_alpha_gap(eps, gamma="1/4", n=None) -> InstanceBundle:
    """Single-action jobs where stopping early is worth a factor ~1/eps over any fixed sequence."""
    eps, gamma = _r(eps, "eps"), _r(gamma, "gamma")
    if not 0 < eps < Fraction(1, 2):
        raise ParameterOutOfRange("eps must lie in (0, 1/2)")
    if not 0 < gamma < Fraction(1, 2):
        raise ParameterOutOfRange("gamma must lie in (0, 1/2)")
    n = math.ceil(1 / eps) if n is None else int(n)
    if n < 1:
        raise ParameterOutOfRange("n must be positive")
    a, b = ladder_sizes(n, gamma)
    agents = [
        ContractAgent(2, [ContractAction(2 - eps, _dist([(a[i], 1 - eps), (b[i], eps)]))])
        for i in range(n)
    ]
    claims = {
        "alpha": (2 - eps) / eps,
        "stop_value_identity": 1 - (1 - eps) ** n,
        "nonadapt": eps,
    }
    return InstanceBundle(ContractInstance(agents), "alpha-gap", {"eps": eps, "gamma": gamma, "n": n}, claims)


def gen_fully_vs_stop(eps, gamma="1/4", copies=1) -> InstanceBundle:
    """Typed jobs where a fully adaptive ladder beats every stopping-time order."""
    eps, gamma = _r(eps, "eps"), _r(gamma, "gamma")
    if not 0 < eps < 1 or (1 / eps).denominator != 1:
        raise ParameterOutOfRange("eps must be 1/k for an integer k >= 2")
    if 1 - eps - eps**2 <= 0:
        raise ParameterOutOfRange("eps too large for a valid size table")
    if not 0 < gamma < Fraction(1, 2):
        raise ParameterOutOfRange("gamma must lie in (0, 1/2)")
    copies = int(copies)
    if copies < 1:
        raise ParameterOutOfRange("copies must be >= 1")
    types = int(1 / eps)
    a, b = ladder_sizes(types, gamma)
    v = 15 / eps
    c = v - eps**2
    items = []
    for i in range(types):
        d = _dist([(0, 1 - eps - eps**2), (a[i], eps), (b[i], eps**2)])
        items.extend(MskcItem(v, [MskcChoice(c, d)]) for _ in range(copies))
    params = {"eps": eps, "gamma": gamma, "copies": copies}
    claims = {"alpha": c / eps**2, "adapt_lower": "1/(2e)"}
    return InstanceBundle(MskcInstance(items), "fully-vs-stop", params, claims)


def type_groups(bundle: InstanceBundle):
    """Item index groups per type for families built from repeated copies."""
    copies = int(bundle.params["copies"])
    n = len(bundle.instance.items)
    return [list(range(k, k + copies)) for k in range(0, n, copies)]


def ladder_advance_sizes(bundle: InstanceBundle):
    eps, gamma = to_rational(bundle.params["eps"]), to_rational(bundle.params["gamma"])
    a, _ = ladder_sizes(int(1 / eps), gamma)
    return a


def _solve_exact(A, b):
    # Gauss-Jordan elimination over the rationals
    n = len(A)
    M = [list(row) + [rhs] for row, rhs in zip(A, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        M[col] = [x / p for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def moment_points(k: int):
    return [1 - Fraction(1, 2**j) for j in range(1, k + 1)] + [Fraction(1)]


def solve_moment_match(k: int, eps, delta) -> list:
    """Probabilities on ``1 - 2^-j`` (j <= k) and 1 matching k moments of the good item."""
    k = int(k)
    if k < 1:
        raise ParameterOutOfRange("k must be >= 1")
    eps, delta = _r(eps, "eps"), _r(delta, "delta")
    if not 0 < eps < Fraction(1, 2):
        raise ParameterOutOfRange("eps must lie in (0, 1/2)")
    if delta <= 0:
        raise ParameterOutOfRange("delta must be positive")
    t = moment_points(k)
    A = [[tj**r for tj in t] for r in range(k + 1)]
    rhs = [Fraction(0)] + [(1 - 2 * eps) * delta**r for r in range(1, k + 1)]
    x = _solve_exact(A, rhs)
    p = [eps / (k + 1) - xj for xj in x]
    if any(pj < 0 for pj in p):
        raise DeltaTooLarge(f"delta={delta} gives a negative probability; shrink it")
    return p


def info_gap_dists(k: int, eps, delta=None):
    """(good, bad) size distributions; ``k = 0`` is the first-moment warm-up pair."""
    eps = _r(eps, "eps")
    if k == 0:
        good = _dist([(0, 1 - eps), (1, eps)])
        bad = _dist([(eps / 2, 1 - eps / (2 - eps)), (1, eps / (2 - eps))])
        return good, bad
    t = moment_points(k)
    p = solve_moment_match(k, eps, delta)
    good = _dist([(0, 1 - 2 * eps)] + [(tj, eps / (k + 1)) for tj in t] + [(1, eps)])
    bad = _dist([(_r(delta, "delta"), 1 - 2 * eps)] + list(zip(t, p)) + [(1, eps)])
    return good, bad


def gen_info_gap(k, eps, delta=None, n=2) -> InstanceBundle:
    """``n`` good items followed by ``n^2 - n`` bad ones with matching low moments."""
    k, n = int(k), int(n)
    eps = _r(eps, "eps")
    if not 0 < eps < Fraction(1, 2):
        raise ParameterOutOfRange("eps must lie in (0, 1/2)")
    if n < 1:
        raise ParameterOutOfRange("n must be positive")
    if k >= 1 and delta is None:
        raise ParameterOutOfRange("delta is required for k >= 1")
    good, bad = info_gap_dists(k, eps, delta)
    items = [MskcItem(2, [MskcChoice(2 - eps, good)]) for _ in range(n)]
    items += [MskcItem(2, [MskcChoice(2 - eps, bad)]) for _ in range(n * n - n)]
    params = {"k": k, "eps": eps, "delta": delta, "n": n}
    claims = {"alpha": (2 - eps) / eps, "one_bad_item": eps}
    return InstanceBundle(MskcInstance(items), "info-gap", params, claims)


def gen_lp_gap(eps, copies=None) -> InstanceBundle:
    """Identical jobs whose relaxation value overstates every policy by a factor ~alpha."""
    eps = _r(eps, "eps")
    if not 0 < eps < Fraction(1, 2):
        raise ParameterOutOfRange("eps must lie in (0, 1/2)")
    need = math.ceil(1 / (2 * eps))
    copies = need if copies is None else int(copies)
    if copies < need:
        raise ParameterOutOfRange(f"copies must be >= {need}")
    d = _dist([(eps**copies, 1 - eps), (1, eps)])
    items = [MskcItem(1, [MskcChoice(1 - eps, d)]) for _ in range(copies)]
    claims = {"alpha": (1 - eps) / eps, "phi_lower": Fraction(1, 2), "adapt": eps}
    return InstanceBundle(MskcInstance(items), "lp-gap", {"eps": eps, "copies": copies}, claims)


def gen_bounded_gap(eps, copies=6) -> InstanceBundle:
    """Jobs of size at most 1/2 where stopping early beats any fixed sequence."""
    eps = _r(eps, "eps")
    if not 0 < eps < Fraction(1, 2):
        raise ParameterOutOfRange("eps must lie in (0, 1/2)")
    copies = int(copies)
    if copies < 1:
        raise ParameterOutOfRange("copies must be >= 1")
    d = _dist([(eps**copies, 1 - eps), (Fraction(1, 2), eps)])
    items = [MskcItem(2, [MskcChoice(2 - eps**2, d)]) for _ in range(copies)]
    claims = {"alpha": (2 - eps**2) / eps**2, "nonadapt": 2 * eps**2, "stop_value_limit": eps}
    return InstanceBundle(MskcInstance(items), "bounded-gap", {"eps": eps, "copies": copies}, claims)


def restrict(inst: MskcInstance, indices) -> MskcInstance:
    return MskcInstance([inst.items[i] for i in indices], inst.budget)


# ---------------------------------------------------------------------------
# random instances

PROFILES = ("generic", "positive-w", "bounded")


def _random_dist(rng, support_size, max_units, grid):
    k = rng.randint(1, support_size)
    sizes = [Fraction(rng.randint(0, max_units), grid) for _ in range(k)]
    weights = [rng.randint(1, 6) for _ in range(k)]
    tot = sum(weights)
    return FiniteDistribution([(s, Fraction(w, tot)) for s, w in zip(sizes, weights)])


def gen_random(n, m, support_size, seed, profile="generic", *, delta=None, max_size=None, grid=8) -> InstanceBundle:
    """Reproducible random MSKC instance.

    Sizes are multiples of ``1/grid`` up to ``max_size`` (default: the
    budget, 1).  ``positive-w`` makes every real choice profitable;
    ``bounded`` additionally caps the mass above ``1 - delta`` at
    ``1/(2 n alpha)`` by moving excess mass to size 0.
    """
    if profile not in PROFILES:
        raise ParameterOutOfRange(f"profile must be one of {PROFILES}")
    n, m, support_size = int(n), int(m), int(support_size)
    if n < 1 or m < 1 or support_size < 1:
        raise ParameterOutOfRange("n, m and support_size must be positive")
    max_size = Fraction(1) if max_size is None else _r(max_size, "max_size")
    max_units = math.floor(max_size * grid)
    rng = random.Random(f"{seed}:{n}:{m}:{support_size}:{profile}")
    items = []
    for _ in range(n):
        value = Fraction(rng.randint(2, 12), 4)
        choices = []
        for _ in range(rng.randint(1, m)):
            d = _random_dist(rng, support_size, max_units, grid)
            if profile == "generic":
                cost = Fraction(rng.randint(0, 10), 4)
            else:
                fit = cdf_at(d, 1)
                if fit == 0:
                    d = FiniteDistribution([(0, 1)]) if max_units == 0 else _random_dist(rng, 1, min(max_units, grid), grid)
                    fit = cdf_at(d, 1)
                cost = value * fit * Fraction(rng.randint(1, 9), 10)
            choices.append(MskcChoice(cost, d))
        items.append(MskcItem(value, choices))
    inst = MskcInstance(items)
    params = {"n": n, "m": m, "support_size": support_size, "seed": seed, "profile": profile,
              "max_size": max_size, "grid": grid}
    if profile == "bounded":
        delta = Fraction(1, 4) if delta is None else _r(delta, "delta")
        if not 0 < delta < 1:
            raise ParameterOutOfRange("delta must lie in (0, 1)")
        inst = _enforce_bounded(inst, delta)
        params["delta"] = delta
    return InstanceBundle(inst, "random", params)


def bounded_premise(inst: MskcInstance, delta) -> bool:
    delta = to_rational(delta)
    cap = 1 / (2 * len(inst.items) * compute_ior(inst))
    return all(
        sum((p for s, p in ch.dist.atoms if s > 1 - delta), Fraction(0)) <= cap
        for item in inst.items
        for ch in item.choices[1:]
    )


def _enforce_bounded(inst, delta):
    cap = 1 / (2 * len(inst.items) * compute_ior(inst))
    items = []
    for item in inst.items:
        choices = []
        for ch in item.choices[1:]:
            heavy = sum((p for s, p in ch.dist.atoms if s > 1 - delta), Fraction(0))
            if heavy > cap:
                scale = cap / heavy
                atoms = [(s, p * scale if s > 1 - delta else p) for s, p in ch.dist.atoms]
                atoms.append((Fraction(0), heavy - cap))
                ch = MskcChoice(ch.cost, FiniteDistribution(atoms))
            choices.append(ch)
        items.append(MskcItem(item.value, choices))
    out = MskcInstance(items, inst.budget)
    # moving mass to 0 can only raise profit proxies, so the cap only loosens
    assert bounded_premise(out, delta)
    return out


def gen_random_contract(n, m, support_size, seed, grid=4) -> InstanceBundle:
    """Random contract instance; action costs and distributions on a small grid."""
    rng = random.Random(f"contract:{seed}:{n}:{m}:{support_size}")
    agents = []
    for _ in range(int(n)):
        acts = []
        for _ in range(rng.randint(1, int(m))):
            acts.append(ContractAction(Fraction(rng.randint(0, 6), 4), _random_dist(rng, support_size, grid, grid)))
        agents.append(ContractAgent(Fraction(rng.randint(2, 12), 4), acts))
    params = {"n": n, "m": m, "support_size": support_size, "seed": seed, "grid": grid}
    return InstanceBundle(ContractInstance(agents), "random-contract", params)


# ---------------------------------------------------------------------------
# JSON


def _dist_json(d):
    return [[format_rational(s), format_rational(p)] for s, p in d.atoms]


def bundle_to_dict(bundle: InstanceBundle) -> dict:
    inst = bundle.instance
    out = {"kind": bundle.kind, "family": bundle.family, "params": bundle.params,
           "claims": bundle.claims, "budget": format_rational(inst.budget)}
    if bundle.kind == "contract":
        out["agents"] = [
            {"value": format_rational(a.value),
             "actions": [{"cost": format_rational(x.cost), "dist": _dist_json(x.dist)} for x in a.actions]}
            for a in inst.agents
        ]
    else:
        out["items"] = [
            {"value": format_rational(it.value),
             "choices": [{"cost": format_rational(c.cost), "dist": _dist_json(c.dist)} for c in it.choices[1:]]}
            for it in inst.items
        ]
    return out


def _parse_rat(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ParseError(f"{where}: expected an integer or a rational string, got {v!r}")
    try:
        return to_rational(v)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _parse_dist(raw, where):
    if not isinstance(raw, list) or not raw:
        raise ParseError(f"{where}: expected a non-empty list of [size, prob] pairs")
    pairs = []
    for k, pair in enumerate(raw):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"{where}[{k}]: expected [size, prob]")
        pairs.append((_parse_rat(pair[0], f"{where}[{k}].size"), _parse_rat(pair[1], f"{where}[{k}].prob")))
    try:
        return FiniteDistribution(pairs)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _need(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    return obj[key]


def bundle_from_dict(data: dict) -> InstanceBundle:
    if not isinstance(data, dict):
        raise ParseError("top level must be an object")
    kind = data.get("kind", "contract" if "agents" in data else "mskc")
    budget = _parse_rat(data.get("budget", "1"), "budget")
    try:
        if kind == "contract":
            agents = []
            for i, a in enumerate(_need(data, "agents", "top level")):
                w = f"agents[{i}]"
                acts = [
                    ContractAction(_parse_rat(_need(x, "cost", f"{w}.actions[{j}]"), f"{w}.actions[{j}].cost"),
                                   _parse_dist(_need(x, "dist", f"{w}.actions[{j}]"), f"{w}.actions[{j}].dist"))
                    for j, x in enumerate(_need(a, "actions", w))
                ]
                agents.append(ContractAgent(_parse_rat(_need(a, "value", w), f"{w}.value"), acts))
            inst = ContractInstance(agents, budget)
        elif kind == "mskc":
            items = []
            for i, it in enumerate(_need(data, "items", "top level")):
                w = f"items[{i}]"
                chs = [
                    MskcChoice(_parse_rat(_need(c, "cost", f"{w}.choices[{j}]"), f"{w}.choices[{j}].cost"),
                               _parse_dist(_need(c, "dist", f"{w}.choices[{j}]"), f"{w}.choices[{j}].dist"))
                    for j, c in enumerate(_need(it, "choices", w))
                ]
                items.append(MskcItem(_parse_rat(_need(it, "value", w), f"{w}.value"), chs))
            inst = MskcInstance(items, budget)
        else:
            raise ParseError(f"unknown kind {kind!r}")
    except ParseError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from exc
    return InstanceBundle(inst, data.get("family", "custom"), data.get("params", {}), data.get("claims", {}))


def write_json(bundle: InstanceBundle, path) -> None:
    with open(path, "w") as fh:
        json.dump(bundle_to_dict(bundle), fh, indent=1)
        fh.write("\n")


def read_json(path) -> InstanceBundle:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return bundle_from_dict(data)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc
