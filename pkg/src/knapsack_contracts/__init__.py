"""Incentive contracts for sequential stochastic jobs under a shared time budget."""

from .core import (
    Contract,
    ContractAction,
    ContractAgent,
    ContractInstance,
    FiniteDistribution,
    MskcChoice,
    MskcInstance,
    MskcItem,
    to_rational,
)
from .contracts import compute_ior, min_payment_contract, reduce_to_mskc
from .engine import estimate_profit_mc, execute, expected_profit_exact
from .lp_phi import solve_phi
from .oracle import adapt_of_opt, adapt_opt, nonadapt_opt, stopadapt_opt
from .policies import (
    build_ordered_adaptive,
    build_skc,
    build_skc_bound,
    build_skc_of,
    optimal_stopping_rule,
)

__all__ = [
    "Contract", "ContractAction", "ContractAgent", "ContractInstance", "FiniteDistribution", "MskcChoice",
    "MskcInstance", "MskcItem", "to_rational", "compute_ior", "min_payment_contract", "reduce_to_mskc",
    "estimate_profit_mc", "execute", "expected_profit_exact", "solve_phi", "adapt_of_opt", "adapt_opt",
    "nonadapt_opt", "stopadapt_opt", "build_ordered_adaptive", "build_skc", "build_skc_bound", "build_skc_of",
    "optimal_stopping_rule",
]
