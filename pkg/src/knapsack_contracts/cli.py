"""Command-line front end.

Exit codes: 0 success, 1 a checked bound failed or a computation gave up,
2 bad usage or unreadable input.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys

from .contracts import NoImplementableAction, NoPositiveChoice, NotImplementable, min_payment_contract, reduce_to_mskc
from .core import ContractInstance, MagnitudeError, format_rational, to_rational
from .engine import estimate_profit_mc, expected_profit_exact
from .experiments import PRESETS, run_preset
from .instances import (
    InstanceBundle,
    ParameterOutOfRange,
    DeltaTooLarge,
    ParseError,
    gen_alpha_gap,
    gen_bounded_gap,
    gen_fully_vs_stop,
    gen_info_gap,
    gen_lp_gap,
    gen_random,
    gen_random_contract,
    read_json,
    write_json,
)
from .lp_phi import InfeasibleInput, solve_phi
from .oracle import adapt_of_opt, adapt_opt, nonadapt_opt, stopadapt_opt
from .policies import (
    InvalidPolicy,
    StateSpaceTooLarge,
    build_ordered_adaptive,
    build_skc,
    build_skc_bound,
    build_skc_of,
    policy_from_dict,
    policy_to_dict,
)

PROG = "knapsack-contracts"


class UsageError(Exception):
    pass


def _mskc(bundle: InstanceBundle, include_ir=True):
    if isinstance(bundle.instance, ContractInstance):
        return reduce_to_mskc(bundle.instance, include_ir).instance
    return bundle.instance


def _rat(text):
    try:
        return to_rational(text)
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _emit(args, payload):
    payload = {"invocation": args.invocation, **payload}
    if args.format == "text":
        for k, v in payload.items():
            print(f"{k}: {v if not isinstance(v, (dict, list)) else json.dumps(v)}")
    else:
        print(json.dumps(payload, indent=1))


def cmd_solve_phi(args):
    inst = _mskc(read_json(args.instance))
    sol = solve_phi(inst, args.budget)
    x = {f"{i}:{j}": format_rational(v) for (i, j), v in sorted(sol.x.items()) if v}
    frac = None
    if sol.fractional is not None:
        f = sol.fractional
        frac = {"item": f.item, "choices": list(f.choices), "weights": [format_rational(w) for w in f.weights]}
    _emit(args, {"phi": format_rational(sol.value), "t": format_rational(sol.t), "x": x, "fractional": frac})
    return 0


def cmd_contract(args):
    bundle = read_json(args.instance)
    if not isinstance(bundle.instance, ContractInstance):
        raise UsageError("contract needs a contract instance")
    agents = bundle.instance.agents
    if not 0 <= args.agent < len(agents) or not 0 <= args.action < len(agents[args.agent].actions):
        raise UsageError("agent or action index out of range")
    inc = min_payment_contract(agents[args.agent], args.action, not args.no_ir, agent_index=args.agent)
    pays = [[format_rational(s), format_rational(p)] for s, p in inc.contract.payments]
    _emit(args, {"agent": args.agent, "action": args.action, "contract": pays,
                 "expected_transfer": format_rational(inc.expected_transfer)})
    return 0


def cmd_reduce(args):
    bundle = read_json(args.instance)
    if not isinstance(bundle.instance, ContractInstance):
        raise UsageError("reduce needs a contract instance")
    red = reduce_to_mskc(bundle.instance, not args.no_ir)
    mapping = {f"{i}:{pos}": inc.action for (i, pos), inc in sorted(red.mapping.items())}
    out = InstanceBundle(red.instance, "reduced", {"source": bundle.family, "include_ir": not args.no_ir,
                                                  "action_of_choice": mapping})
    write_json(out, args.out)
    _emit(args, {"written": args.out, "items": len(red.instance.items)})
    return 0


def cmd_policy(args):
    inst = _mskc(read_json(args.instance))
    if args.algo == "skc":
        pol = build_skc(inst, derandomize=not args.randomized)
    elif args.algo == "skc-of":
        pol = build_skc_of(inst, args.t, derandomize=not args.randomized)
    elif args.algo == "skc-bound":
        if args.delta is None:
            raise UsageError("skc-bound needs --delta")
        pol = build_skc_bound(inst, args.delta, derandomize=not args.randomized)
    else:
        if args.epsilon is None:
            raise UsageError("ordered needs --epsilon")
        _, pol = build_ordered_adaptive(inst, args.epsilon)
    data = policy_to_dict(pol)
    data["algorithm"] = args.algo
    if args.algo == "ordered":
        data["capacity"] = format_rational((1 + args.epsilon) * inst.budget)
    with open(args.out, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
    _emit(args, {"written": args.out, "algorithm": args.algo})
    return 0


def _load_policy(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return policy_from_dict(data), data
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad policy: {exc}") from exc


def cmd_eval(args):
    inst = _mskc(read_json(args.instance))
    pol, data = _load_policy(args.policy)
    budget = args.budget
    if budget is None and "capacity" in data:
        budget = to_rational(data["capacity"])
    if args.mc is None:
        val = expected_profit_exact(pol, inst, budget=budget, overflow_collecting=args.overflow_collecting)
        _emit(args, {"profit": format_rational(val), "exact": True})
    else:
        if args.mc < 1:
            raise UsageError("--mc needs at least one trial")
        est = estimate_profit_mc(pol, inst, args.mc, args.seed, budget=budget,
                                 overflow_collecting=args.overflow_collecting)
        _emit(args, {"profit": est.to_json(), "exact": False})
    return 0


ORACLES = {"adapt": adapt_opt, "adapt-of": adapt_of_opt, "stop": stopadapt_opt, "nonadapt": nonadapt_opt}


def cmd_oracle(args):
    inst = _mskc(read_json(args.instance))
    res = ORACLES[args.cls](inst, max_items=args.max_items)
    _emit(args, {"class": args.cls, "value": format_rational(res.value), "states_explored": res.states_explored})
    return 0


def cmd_gen(args):
    fam = args.family
    if fam == "alpha-gap":
        b = gen_alpha_gap(args.eps, args.gamma, args.n)
    elif fam == "fully-vs-stop":
        b = gen_fully_vs_stop(args.eps, args.gamma, args.copies or 1)
    elif fam == "info-gap":
        b = gen_info_gap(args.k, args.eps, args.delta, args.n or 2)
    elif fam == "lp-gap":
        b = gen_lp_gap(args.eps, args.copies)
    elif fam == "bounded-gap":
        b = gen_bounded_gap(args.eps, args.copies or 6)
    elif fam == "random":
        b = gen_random(args.n or 4, args.m, args.support, args.seed, args.profile, delta=args.delta)
    else:
        b = gen_random_contract(args.n or 3, args.m, args.support, args.seed)
    write_json(b, args.out)
    _emit(args, {"written": args.out, "family": b.family, "params": b.params})
    return 0


def cmd_experiment(args):
    report = run_preset(args.preset, workers=args.workers)
    report.write(args.out)
    failed = [r for r in report.rows if not r.passed]
    _emit(args, {"experiment": report.experiment, "rows": len(report.rows), "failed": len(failed),
                 "passed": report.passed, "out": args.out})
    return 0 if report.passed else 1


def build_parser():
    p = argparse.ArgumentParser(prog=PROG, description="Knapsack contracts solver and simulator.")
    p.add_argument("--format", choices=("json", "text"), default="json", help="output style")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("solve-phi", help="relaxation value and structured solution")
    s.add_argument("instance")
    s.add_argument("--budget", type=_rat, default=None, help="truncation/capacity t")
    s.set_defaults(fn=cmd_solve_phi)

    s = sub.add_parser("contract", help="cheapest contract for one action")
    s.add_argument("instance")
    s.add_argument("--agent", type=int, required=True)
    s.add_argument("--action", type=int, required=True)
    s.add_argument("--no-ir", action="store_true")
    s.set_defaults(fn=cmd_contract)

    s = sub.add_parser("reduce", help="write the equivalent knapsack instance")
    s.add_argument("instance")
    s.add_argument("--out", required=True)
    s.add_argument("--no-ir", action="store_true")
    s.set_defaults(fn=cmd_reduce)

    s = sub.add_parser("policy", help="build a policy and write it as JSON")
    s.add_argument("instance")
    s.add_argument("--algo", choices=("skc", "skc-of", "skc-bound", "ordered"), required=True)
    s.add_argument("--delta", type=_rat)
    s.add_argument("--epsilon", type=_rat)
    s.add_argument("--t", type=_rat, default=None)
    s.add_argument("--randomized", action="store_true", help="keep the mixed step unresolved")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_policy)

    s = sub.add_parser("eval", help="expected profit of a policy")
    s.add_argument("instance")
    s.add_argument("policy")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", default=True)
    g.add_argument("--mc", type=int, default=None, metavar="TRIALS")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=_rat, default=None)
    s.add_argument("--overflow-collecting", action="store_true")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("oracle", help="exact optimum of a policy class")
    s.add_argument("instance")
    s.add_argument("--class", dest="cls", choices=tuple(ORACLES), required=True)
    s.add_argument("--max-items", type=int, default=10, help="refuse larger instances (default 10)")
    s.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("gen", help="generate an instance family")
    s.add_argument("family", choices=("alpha-gap", "fully-vs-stop", "info-gap", "lp-gap", "bounded-gap",
                                      "random", "random-contract"))
    s.add_argument("--eps", type=_rat, default=None)
    s.add_argument("--gamma", type=_rat, default=to_rational("1/4"))
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--k", type=int, default=0)
    s.add_argument("--delta", type=_rat, default=None)
    s.add_argument("--copies", type=int, default=None)
    s.add_argument("--m", type=int, default=3)
    s.add_argument("--support", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--profile", choices=("generic", "positive-w", "bounded"), default="generic")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen)

    s = sub.add_parser("experiment", help="run a reproduction preset")
    s.add_argument("preset", choices=PRESETS)
    s.add_argument("--out", default="results")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.invocation = " ".join([PROG] + [shlex.quote(a) for a in argv])
    if args.cmd == "gen" and args.family not in ("random", "random-contract") and args.eps is None:
        print(f"{PROG}: error: --eps is required for {args.family}", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (UsageError, ParseError, ParameterOutOfRange, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except (StateSpaceTooLarge, NotImplementable, NoImplementableAction, NoPositiveChoice, DeltaTooLarge,
            InvalidPolicy, InfeasibleInput, MagnitudeError) as exc:
        print(f"{PROG}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
