"""Optimal contracts for a single agent and the reduction to MSKC.

A contract pays ``t(s)`` when the agent's job finishes at time ``s``.  To make
action ``j`` the agent's best response we need, for every other action ``j'``,

    E_j[t] - c_j >= E_j'[t] - c_j'

and the principal wants the cheapest such monotone schedule.  That is a tiny
LP in the payments, solved exactly by :func:`solve_lp_exact`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .core import (
    Contract,
    ContractAgent,
    ContractInstance,
    MskcChoice,
    MskcInstance,
    MskcItem,
    cdf_at,
)
from .lp import GE, LpProblem, LpStatus, solve_lp_exact


class NotImplementable(ValueError):
    """No monotone non-negative contract makes the requested action a best response."""


class NoImplementableAction(ValueError):
    pass


class NoPositiveChoice(ValueError):
    """Every real choice has non-positive profit proxy, so the IOR is undefined."""


@dataclass(frozen=True)
class IncentivizedChoice:
    agent: int | None
    action: int
    contract: Contract
    expected_transfer: Fraction


def _probs_on(agent: ContractAgent, action: int, support) -> list:
    d = dict(agent.actions[action].dist.atoms)
    return [d.get(s, Fraction(0)) for s in support]


def contract_lp(agent: ContractAgent, j: int, include_ir: bool = True) -> LpProblem:
    """The payment-minimisation LP for action ``j``; variables are ``t(s)`` on the support."""
    support = agent.support
    n = len(support)
    fj = _probs_on(agent, j, support)
    cj = agent.actions[j].cost
    prob = LpProblem(objective=fj, sense="min")
    for k, act in enumerate(agent.actions):
        if k == j:
            continue
        fk = _probs_on(agent, k, support)
        prob.add_row([a - b for a, b in zip(fj, fk)], GE, cj - act.cost)
    # shorter completion is paid at least as much
    for a in range(n - 1):
        row = [Fraction(0)] * n
        row[a], row[a + 1] = Fraction(1), Fraction(-1)
        prob.add_row(row, GE, 0)
    if include_ir:
        prob.add_row(fj, GE, cj)
    return prob


def min_payment_contract(agent: ContractAgent, j: int, include_ir: bool = True, *, agent_index=None) -> IncentivizedChoice:
    if not 0 <= j < len(agent.actions):
        raise IndexError(f"action index {j} out of range")
    sol = solve_lp_exact(contract_lp(agent, j, include_ir))
    if sol.status is LpStatus.INFEASIBLE:
        raise NotImplementable(f"action {j} cannot be incentivized")
    if sol.status is not LpStatus.OPTIMAL:  # pragma: no cover - objective is bounded below by 0
        raise ArithmeticError(f"unexpected LP status {sol.status}")
    contract = Contract(zip(agent.support, sol.x))
    expected = contract.expected(agent.actions[j].dist)
    assert expected == sol.value
    return IncentivizedChoice(agent_index, j, contract, expected)


def implementable_actions(agent: ContractAgent, include_ir: bool = True, *, agent_index=None) -> list:
    out = []
    for j in range(len(agent.actions)):
        try:
            out.append((j, min_payment_contract(agent, j, include_ir, agent_index=agent_index)))
        except NotImplementable:
            pass
    return out


def agent_utility(agent: ContractAgent, contract: Contract, j: int) -> Fraction:
    act = agent.actions[j]
    return contract.expected(act.dist) - act.cost


def is_best_response(agent: ContractAgent, contract: Contract, j: int) -> bool:
    u = agent_utility(agent, contract, j)
    return all(agent_utility(agent, contract, k) <= u for k in range(len(agent.actions)))


class Reduction(NamedTuple):
    instance: MskcInstance
    # (item, choice) -> IncentivizedChoice; choice indices start at 1 (0 is null)
    mapping: dict


def reduce_to_mskc(ci: ContractInstance, include_ir: bool = True) -> Reduction:
    items = []
    mapping = {}
    for i, agent in enumerate(ci.agents):
        acts = implementable_actions(agent, include_ir, agent_index=i)
        if not acts:
            raise NoImplementableAction(f"agent {i} has no implementable action")
        choices = []
        for pos, (j, inc) in enumerate(acts, start=1):
            choices.append(MskcChoice(inc.expected_transfer, agent.actions[j].dist))
            mapping[(i, pos)] = inc
        items.append(MskcItem(agent.value, choices))
    return Reduction(MskcInstance(items, ci.budget), mapping)


def _weights(inst: MskcInstance):
    for i, item in enumerate(inst.items):
        for j in item.real_choices:
            ch = item.choices[j]
            yield i, j, ch.cost, item.value * cdf_at(ch.dist, inst.budget) - ch.cost


def unprofitable_choices(inst: MskcInstance) -> list:
    """Real choices whose profit proxy at the budget is <= 0 (excluded from the IOR)."""
    return [(i, j) for i, j, _, w in _weights(inst) if w <= 0]


def compute_ior(inst: MskcInstance) -> Fraction:
    """Largest cost-to-profit-proxy ratio over profitable real choices."""
    ratios = [p / w for _, _, p, w in _weights(inst) if w > 0]
    if not ratios:
        raise NoPositiveChoice("no real choice has positive profit proxy")
    return max(ratios)
