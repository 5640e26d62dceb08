"""Small dense LP solver over exact rationals.

Two-phase tableau simplex with Bland's rule, so it always terminates.  All
variables are implicitly non-negative.  Meant for the handful-of-variables
problems in this package, not for general modelling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import checked, to_rational

LE, GE, EQ = "<=", ">=", "=="
_RELS = (LE, GE, EQ)


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpProblem:
    """maximize/minimize ``objective . x`` subject to ``rows`` with ``x >= 0``.

    Each row is ``(coeffs, rel, rhs)`` where ``rel`` is one of ``"<="``,
    ``">="`` or ``"=="``.
    """

    objective: list
    rows: list = field(default_factory=list)
    sense: str = "max"

    def __post_init__(self):
        self.objective = [to_rational(c) for c in self.objective]
        n = len(self.objective)
        rows = []
        for coeffs, rel, rhs in self.rows:
            if rel not in _RELS:
                raise ValueError(f"unknown relation {rel!r}")
            if len(coeffs) != n:
                raise ValueError("row length does not match objective length")
            rows.append(([to_rational(c) for c in coeffs], rel, to_rational(rhs)))
        self.rows = rows
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    def add_row(self, coeffs: Sequence, rel: str, rhs) -> None:
        if rel not in _RELS:
            raise ValueError(f"unknown relation {rel!r}")
        if len(coeffs) != self.num_vars:
            raise ValueError("row length does not match objective length")
        self.rows.append(([to_rational(c) for c in coeffs], rel, to_rational(rhs)))

    def is_feasible(self, x: Sequence[Fraction]) -> bool:
        if len(x) != self.num_vars or any(v < 0 for v in x):
            return False
        for coeffs, rel, rhs in self.rows:
            lhs = sum((a * v for a, v in zip(coeffs, x)), Fraction(0))
            if rel == LE and lhs > rhs:
                return False
            if rel == GE and lhs < rhs:
                return False
            if rel == EQ and lhs != rhs:
                return False
        return True

    def value(self, x: Sequence[Fraction]) -> Fraction:
        return sum((c * v for c, v in zip(self.objective, x)), Fraction(0))


@dataclass
class LpSolution:
    status: LpStatus
    value: Fraction | None = None
    x: list | None = None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    # rows[r] holds constraint coefficients followed by the rhs;
    # basis[r] is the column basic in row r.
    def __init__(self, rows, basis):
        self.rows = rows
        self.basis = basis
        self.pivots = 0

    def pivot(self, r, c):
        row = self.rows[r]
        p = row[c]
        row[:] = [checked(a / p) for a in row]
        for k, other in enumerate(self.rows):
            if k != r and other[c] != 0:
                f = other[c]
                other[:] = [a - f * b for a, b in zip(other, row)]
        self.basis[r] = c
        self.pivots += 1

    def reduced_costs(self, cost, ncols):
        # reduced cost d_j = c_j - c_B . column_j  (maximization)
        d = list(cost[:ncols])
        for r, b in enumerate(self.basis):
            cb = cost[b]
            if cb:
                row = self.rows[r]
                for j in range(ncols):
                    if row[j]:
                        d[j] -= cb * row[j]
        return d

    def optimize(self, cost, allowed):
        """Maximize ``cost . x`` over columns in ``allowed``; False if unbounded."""
        while True:
            d = self.reduced_costs(cost, len(cost))
            enter = next((j for j in sorted(allowed) if d[j] > 0), None)
            if enter is None:
                return True
            best = None
            for r, row in enumerate(self.rows):
                a = row[enter]
                if a > 0:
                    ratio = row[-1] / a
                    key = (ratio, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                return False
            self.pivot(best[1], enter)


def solve_lp_exact(problem: LpProblem) -> LpSolution:
    """Solve ``problem`` exactly; an optimal answer is re-verified against every row."""
    n = problem.num_vars
    sign = 1 if problem.sense == "max" else -1

    # count auxiliary columns
    norm = []
    for coeffs, rel, rhs in problem.rows:
        if rhs < 0:
            coeffs = [-a for a in coeffs]
            rhs = -rhs
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        norm.append((coeffs, rel, rhs))
    n_slack = sum(1 for _, rel, _ in norm if rel in (LE, GE))
    n_art = sum(1 for _, rel, _ in norm if rel in (GE, EQ))
    ncols = n + n_slack + n_art
    art_start = n + n_slack

    rows, basis = [], []
    s_idx, a_idx = n, art_start
    for coeffs, rel, rhs in norm:
        row = list(coeffs) + [Fraction(0)] * (n_slack + n_art) + [rhs]
        if rel == LE:
            row[s_idx] = Fraction(1)
            basis.append(s_idx)
            s_idx += 1
        elif rel == GE:
            row[s_idx] = Fraction(-1)
            s_idx += 1
            row[a_idx] = Fraction(1)
            basis.append(a_idx)
            a_idx += 1
        else:
            row[a_idx] = Fraction(1)
            basis.append(a_idx)
            a_idx += 1
        rows.append(row)

    tab = _Tableau(rows, basis)
    if n_art:
        phase1 = [Fraction(0)] * art_start + [Fraction(-1)] * n_art
        tab.optimize(phase1, range(ncols))
        infeas = sum((tab.rows[r][-1] for r, b in enumerate(tab.basis) if b >= art_start), Fraction(0))
        if infeas > 0:
            return LpSolution(LpStatus.INFEASIBLE, pivots=tab.pivots)
        # drive zero-level artificials out of the basis, dropping redundant rows
        r = 0
        while r < len(tab.rows):
            if tab.basis[r] >= art_start:
                col = next((j for j in range(art_start) if tab.rows[r][j] != 0), None)
                if col is None:
                    del tab.rows[r]
                    del tab.basis[r]
                    continue
                tab.pivot(r, col)
            r += 1

    cost = [sign * c for c in problem.objective] + [Fraction(0)] * (ncols - n)
    if not tab.optimize(cost, range(art_start)):
        return LpSolution(LpStatus.UNBOUNDED, pivots=tab.pivots)

    x = [Fraction(0)] * n
    for r, b in enumerate(tab.basis):
        if b < n:
            x[b] = tab.rows[r][-1]
    if not problem.is_feasible(x):
        raise ArithmeticError("simplex returned a point violating the constraints")
    return LpSolution(LpStatus.OPTIMAL, problem.value(x), x, tab.pivots)
