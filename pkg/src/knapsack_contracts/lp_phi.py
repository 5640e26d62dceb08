"""The fractional relaxation of MSKC and its structured optimal solutions.

For a truncation point ``t`` every choice is summarised by a profit proxy
``w = v * Pr[s <= t] - cost`` and a truncated size ``mu = E[min(s, t)]``.  The
relaxation picks a convex combination of choices per item, maximising total
``w`` subject to total ``mu`` <= capacity.

Per item only the upper concave hull of the ``(mu, w)`` points matters, so we
solve it greedily: every item starts at its hull vertex with ``mu = 0`` and
hull segments are bought in order of decreasing ``dw/dmu`` until capacity
runs out.  At most one segment is bought partially, giving a solution with at
most one split item.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .core import NULL_CHOICE, MskcInstance, MskcItem, choice_size, choice_weight, to_rational
from .lp import EQ, LE, LpProblem, LpStatus, solve_lp_exact


class InfeasibleInput(ValueError):
    """An assignment handed to :func:`structure_solution` violates the LP constraints."""


class PhiStructureError(ArithmeticError):
    """A solution failed the feasibility or one-split-item checks."""


@dataclass(frozen=True)
class FrontierPoint:
    choice: int
    w: Fraction
    mu: Fraction


@dataclass(frozen=True)
class ParetoFrontier:
    """Undominated choices ordered by increasing ``w`` (and increasing ``mu``)."""

    item: int | None
    points: tuple[FrontierPoint, ...]

    @property
    def choices(self) -> tuple[int, ...]:
        return tuple(p.choice for p in self.points)

    def segments(self):
        """Yield ``(k, dw, dmu)`` for consecutive frontier points."""
        for k in range(len(self.points) - 1):
            a, b = self.points[k], self.points[k + 1]
            yield k, b.w - a.w, b.mu - a.mu

    def min_mu_at(self, w: Fraction):
        """Cheapest convex combination on the frontier reaching profit ``w``.

        Returns ``((j_lo, x_lo), (j_hi, x_hi))`` or ``((j, 1), None)``.
        """
        pts = self.points
        if w <= pts[0].w:
            return (pts[0].choice, Fraction(1)), None
        for a, b in zip(pts, pts[1:]):
            if w <= b.w:
                if w == b.w:
                    return (b.choice, Fraction(1)), None
                lam = (w - a.w) / (b.w - a.w)
                return (a.choice, 1 - lam), (b.choice, lam)
        raise ValueError("profit beyond the frontier")


def choice_points(item: MskcItem, t) -> list:
    """``(choice, w, mu)`` for every choice of ``item`` at truncation ``t``."""
    t = to_rational(t)
    return [(j, choice_weight(item, j, t), choice_size(item, j, t)) for j in range(len(item.choices))]


def upper_hull(points, item=None) -> ParetoFrontier:
    """Frontier of raw ``(choice, w, mu)`` triples.

    Starts at the best point with ``mu = 0`` (lowest index on ties) and then
    repeatedly jumps to the point of steepest ``dw/dmu``; among equally steep
    points the farthest wins, so collinear middle points are dropped.
    """
    zero = [p for p in points if p[2] == 0]
    if not zero:
        raise ValueError("frontier needs a zero-size point")
    start = max(zero, key=lambda p: (p[1], -p[0]))
    hull = [start]
    cur = start
    while True:
        best = None
        for p in points:
            if p[1] <= cur[1]:
                continue
            slope = (p[1] - cur[1]) / (p[2] - cur[2])
            key = (slope, p[2], -p[0])
            if best is None or key > best[0]:
                best = (key, p)
        if best is None:
            break
        cur = best[1]
        hull.append(cur)
    return ParetoFrontier(item, tuple(FrontierPoint(j, w, mu) for j, w, mu in hull))


def eliminate_dominated(item: MskcItem, t, *, index=None) -> ParetoFrontier:
    return upper_hull(choice_points(item, t), index)


def dominated_pairwise(points) -> set:
    """Choices that are single- or double-dominated, by direct pairwise checks.

    Quadratic/cubic and independent of :func:`upper_hull`; used to cross-check it.
    Among exact duplicates only the lowest index survives.
    """
    out = set()
    for j, w, mu in points:
        for k, w1, mu1 in points:
            if k == j:
                continue
            if w1 >= w and mu1 <= mu and ((w1, mu1) != (w, mu) or k < j):
                out.add(j)
                break
        if j in out:
            continue
        for k1, wa, mua in points:
            if j in out:
                break
            if not (wa < w and mua <= mu):
                continue
            for k2, wb, mub in points:
                if w < wb and mu <= mub and (mu - mua) * (wb - w) >= (mub - mu) * (w - wa):
                    out.add(j)
                    break
    return out


@dataclass(frozen=True)
class FractionalItem:
    item: int
    choices: tuple[int, int]
    weights: tuple[Fraction, Fraction]


@dataclass(frozen=True)
class PhiSolution:
    value: Fraction
    # (item, choice) -> weight, positive entries only
    x: Mapping
    fractional: FractionalItem | None
    t: Fraction
    capacity: Fraction

    def get(self, i: int, j: int) -> Fraction:
        return self.x.get((i, j), Fraction(0))

    def support(self) -> list:
        return sorted(k for k, v in self.x.items() if v > 0)

    def item_choices(self, i: int) -> list:
        return sorted((j, v) for (a, j), v in self.x.items() if a == i and v > 0)


def _solution_from_x(inst, t, capacity, x) -> PhiSolution:
    x = {k: v for k, v in x.items() if v != 0}
    frac = None
    for i in range(len(inst.items)):
        ch = sorted((j, v) for (a, j), v in x.items() if a == i)
        if len(ch) == 2 and frac is None:
            frac = FractionalItem(i, (ch[0][0], ch[1][0]), (ch[0][1], ch[1][1]))
    value = sum((v * choice_weight(inst.items[i], j, t) for (i, j), v in x.items()), Fraction(0))
    return PhiSolution(value, x, frac, t, capacity)


def check_phi_solution(inst: MskcInstance, sol: PhiSolution) -> None:
    """Raise :class:`PhiStructureError` unless ``sol`` is feasible with at most one split item."""
    t, cap = sol.t, sol.capacity
    used = Fraction(0)
    split = 0
    for i, item in enumerate(inst.items):
        ch = sol.item_choices(i)
        if any(v < 0 or v > 1 for _, v in ch):
            raise PhiStructureError(f"item {i} has weight outside [0, 1]")
        if sum(v for _, v in ch) != 1:
            raise PhiStructureError(f"item {i} weights do not sum to 1")
        if len(ch) > 2:
            raise PhiStructureError(f"item {i} uses {len(ch)} choices")
        if len(ch) == 2:
            split += 1
        used += sum((v * choice_size(item, j, t) for j, v in ch), Fraction(0))
    if split > 1:
        raise PhiStructureError(f"{split} items are split")
    if used > cap:
        raise PhiStructureError(f"size {used} exceeds capacity {cap}")
    value = sum((v * choice_weight(inst.items[i], j, t) for (i, j), v in sol.x.items()), Fraction(0))
    if value != sol.value:
        raise PhiStructureError("stored value does not match the assignment")


def _greedy(inst, t, capacity, frontiers) -> PhiSolution:
    level = [0] * len(frontiers)
    segs = []
    for i, fr in enumerate(frontiers):
        for k, dw, dmu in fr.segments():
            segs.append((-(dw / dmu), i, k, dw, dmu))
    segs.sort(key=lambda s: s[:3])
    room = capacity
    frac = None
    for _, i, k, dw, dmu in segs:
        if room <= 0:
            break
        assert level[i] == k
        if dmu <= room:
            room -= dmu
            level[i] = k + 1
        else:
            frac = (i, k, room / dmu)
            room = Fraction(0)
            break
    x = {}
    for i, fr in enumerate(frontiers):
        x[(i, fr.points[level[i]].choice)] = Fraction(1)
    if frac is not None:
        i, k, lam = frac
        fr = frontiers[i]
        x[(i, fr.points[k].choice)] = 1 - lam
        x[(i, fr.points[k + 1].choice)] = lam
    return _solution_from_x(inst, t, capacity, x)


def phi_lp(inst: MskcInstance, t=None, *, capacity=None):
    """The relaxation written out as a plain LP; returns ``(problem, columns)``."""
    t = inst.budget if t is None else to_rational(t)
    capacity = t if capacity is None else to_rational(capacity)
    cols = [(i, j) for i, item in enumerate(inst.items) for j in range(len(item.choices))]
    obj = [choice_weight(inst.items[i], j, t) for i, j in cols]
    prob = LpProblem(objective=obj, sense="max")
    prob.add_row([choice_size(inst.items[i], j, t) for i, j in cols], LE, capacity)
    for a in range(len(inst.items)):
        prob.add_row([1 if i == a else 0 for i, _ in cols], EQ, 1)
    return prob, cols


def solve_phi(inst: MskcInstance, t=None, *, capacity=None, method: str = "frontier") -> PhiSolution:
    """Optimal structured solution of the relaxation at truncation ``t``.

    ``capacity`` defaults to ``t``.  Passing a larger capacity keeps ``w`` and
    ``mu`` at ``t`` and only relaxes the size constraint, which is the form in
    which the relaxation bounds adaptive policies run with budget ``t``.

    ``method="simplex"`` solves the raw LP and then structures the vertex;
    the default greedy needs no LP solver.
    """
    t = inst.budget if t is None else to_rational(t)
    if t <= 0:
        raise ValueError("t must be positive")
    capacity = t if capacity is None else to_rational(capacity)
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    if method == "frontier":
        frontiers = [eliminate_dominated(item, t, index=i) for i, item in enumerate(inst.items)]
        sol = _greedy(inst, t, capacity, frontiers)
    elif method == "simplex":
        prob, cols = phi_lp(inst, t, capacity=capacity)
        res = solve_lp_exact(prob)
        if res.status is not LpStatus.OPTIMAL:  # pragma: no cover - all-null is feasible, w bounded
            raise ArithmeticError(f"unexpected LP status {res.status}")
        x = {c: v for c, v in zip(cols, res.x) if v}
        sol = structure_solution(inst, t, x, capacity=capacity)
        if sol.value != res.value:
            raise PhiStructureError("structuring changed an optimal value")
    else:
        raise ValueError(f"unknown method {method!r}")
    check_phi_solution(inst, sol)
    return sol


def phi_value(inst: MskcInstance, t=None, *, capacity=None) -> Fraction:
    return solve_phi(inst, t, capacity=capacity).value


def structure_solution(inst: MskcInstance, t, x: Mapping, *, capacity=None, stats: dict | None = None) -> PhiSolution:
    """Turn any feasible assignment into one with at most one split item.

    First each item's mix is replaced by the cheapest frontier mix with the
    same profit (dominated choices lose their mass; profit never drops).  Then
    while two items are split, capacity is shifted from the item on the
    flatter frontier segment to the one on the steeper segment until one of
    them becomes integral.
    """
    t = to_rational(t)
    capacity = t if capacity is None else to_rational(capacity)
    x = {k: to_rational(v) for k, v in x.items() if v}
    n = len(inst.items)
    for (i, j), v in x.items():
        if not (0 <= i < n and 0 <= j < len(inst.items[i].choices)):
            raise InfeasibleInput(f"unknown choice ({i}, {j})")
        if v < 0:
            raise InfeasibleInput(f"negative weight at ({i}, {j})")
    used = Fraction(0)
    for i, item in enumerate(inst.items):
        if sum((v for (a, _), v in x.items() if a == i), Fraction(0)) != 1:
            raise InfeasibleInput(f"weights of item {i} do not sum to 1")
        used += sum((v * choice_size(item, j, t) for (a, j), v in x.items() if a == i), Fraction(0))
    if used > capacity:
        raise InfeasibleInput(f"total size {used} exceeds capacity {capacity}")

    frontiers = [eliminate_dominated(item, t, index=i) for i, item in enumerate(inst.items)]
    # per item: frontier position as (k, lam) meaning (1-lam) at point k, lam at k+1
    pos = []
    for i, item in enumerate(inst.items):
        wi = sum((v * choice_weight(item, j, t) for (a, j), v in x.items() if a == i), Fraction(0))
        pts = frontiers[i].points
        if wi <= pts[0].w:
            pos.append([0, Fraction(0)])
            continue
        for k in range(len(pts) - 1):
            if wi <= pts[k + 1].w:
                lam = (wi - pts[k].w) / (pts[k + 1].w - pts[k].w)
                pos.append([k + 1, Fraction(0)] if lam == 1 else [k, lam])
                break

    rounds = 0
    while True:
        split = [i for i in range(n) if pos[i][1] != 0]
        if len(split) < 2:
            break
        a, b = split[0], split[1]
        segs = {}
        for i in (a, b):
            k = pos[i][0]
            p, q = frontiers[i].points[k], frontiers[i].points[k + 1]
            segs[i] = (q.w - p.w, q.mu - p.mu)
        # steeper item moves up its segment, flatter one moves down
        if segs[a][0] * segs[b][1] >= segs[b][0] * segs[a][1]:
            up, down = a, b
        else:
            up, down = b, a
        up_room = (1 - pos[up][1]) * segs[up][1]
        down_room = pos[down][1] * segs[down][1]
        eta = min(up_room, down_room)
        pos[up][1] += eta / segs[up][1]
        pos[down][1] -= eta / segs[down][1]
        for i in (up, down):
            if pos[i][1] == 1:
                pos[i] = [pos[i][0] + 1, Fraction(0)]
        rounds += 1

    if stats is not None:
        stats["rounds"] = rounds
    out = {}
    for i in range(n):
        k, lam = pos[i]
        pts = frontiers[i].points
        out[(i, pts[k].choice)] = 1 - lam
        if lam:
            out[(i, pts[k + 1].choice)] = lam
    return _solution_from_x(inst, t, capacity, out)


def solution_size(inst: MskcInstance, sol: PhiSolution) -> Fraction:
    return sum((v * choice_size(inst.items[i], j, sol.t) for (i, j), v in sol.x.items()), Fraction(0))


__all__ = [
    "FractionalItem",
    "FrontierPoint",
    "InfeasibleInput",
    "NULL_CHOICE",
    "ParetoFrontier",
    "PhiSolution",
    "PhiStructureError",
    "check_phi_solution",
    "choice_points",
    "dominated_pairwise",
    "eliminate_dominated",
    "phi_lp",
    "phi_value",
    "solution_size",
    "solve_phi",
    "structure_solution",
    "upper_hull",
]
