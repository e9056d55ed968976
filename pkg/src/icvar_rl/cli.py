"""Command-line entry point ``icvar``.

Exit codes: 0 success, 2 validation or configuration failure, 3 budget exceeded, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .env_model import LinearMixtureMDP, load_mdp, mdp_to_dict, validate_mixture
from .errors import BudgetExceededError, ConfigError, IcvarError, InvalidModelError
from .harness import ExperimentConfig, aggregate, emit, run_experiment
from .icvar_g import eluder_dimension
from .instance_gen import (hard_instance, make_hard_params, random_kernel_class,
                           random_linear_mixture, random_tabular)
from .results import results_from_json
from .risk_ops import icvar_optimal_dp, icvar_policy_eval

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4


def _write(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text)


def _read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- subcommands

def cmd_validate(args) -> int:
    mdp = load_mdp(args.model)
    if isinstance(mdp, LinearMixtureMDP):
        report = validate_mixture(mdp, tol=args.tol)
        _write(json.dumps(report.summary(), indent=1), args.out)
        return EXIT_OK if report.ok else EXIT_INVALID
    # tabular rows were checked on load
    _write(json.dumps({"ok": True, "type": "tabular"}), args.out)
    return EXIT_OK


def cmd_dp(args) -> int:
    mdp = load_mdp(args.model)
    V, _, pi = icvar_optimal_dp(mdp, args.alpha)
    out = {"alpha": args.alpha, "V1": V[0, mdp.initial_state], "V": V.tolist(), "policy": pi.tolist()}
    _write(json.dumps(out, indent=1), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    mdp = load_mdp(args.model)
    policy = np.asarray(_read_json(args.policy))
    V = icvar_policy_eval(mdp, policy, args.alpha)
    v_star = icvar_optimal_dp(mdp, args.alpha)[0]
    s1 = mdp.initial_state
    out = {"alpha": args.alpha, "V1": V[0, s1], "V1_star": v_star[0, s1],
           "gap": v_star[0, s1] - V[0, s1], "V": V.tolist()}
    _write(json.dumps(out, indent=1), args.out)
    return EXIT_OK


def cmd_gen_hard(args) -> int:
    p = make_hard_params(args.d, args.H, args.n, args.alpha, args.K, args.c, args.seed, args.delta)
    data = mdp_to_dict(hard_instance(p))
    data["params"] = {"d": p.d, "H": p.H, "n": p.n, "alpha": p.alpha, "delta": p.delta,
                      "mu": list(p.mu), "K": p.K}
    _write(json.dumps(data), args.out)
    return EXIT_OK


def cmd_gen_random(args) -> int:
    if args.kind == "mixture":
        mdp = random_linear_mixture(args.d, args.S, args.A, args.H, args.seed,
                                    concentration=args.concentration, state_rewards=args.state_rewards)
        data = mdp_to_dict(mdp)
    elif args.kind == "tabular":
        data = mdp_to_dict(random_tabular(args.S, args.A, args.H, args.seed))
    else:
        kc, mdp = random_kernel_class(args.N, args.S, args.A, args.H, args.seed)
        data = kc.to_dict()
        data.update(rewards=mdp.rewards.tolist(), initial_state=mdp.initial_state)
    _write(json.dumps(data), args.out)
    return EXIT_OK


def cmd_eluder(args) -> int:
    data = _read_json(args.cls)
    try:
        values = np.asarray(data["functions"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise InvalidModelError("class file needs a rectangular 'functions' array (function x point)") from None
    dim = eluder_dimension(values, args.eps, max_depth=args.max_depth)
    _write(json.dumps({"eps": args.eps, "eluder_dimension": dim}), args.out)
    return EXIT_OK


OVERRIDES = ("alpha", "K", "seeds", "epsilon", "lam", "beta", "gamma", "grid_epsilon",
             "delta", "workers")


def _experiment_config(args, algorithm: str) -> ExperimentConfig:
    base = _read_json(args.config) if args.config else {}
    base["algorithm"] = algorithm
    for key in OVERRIDES:
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    for key in ("beta", "gamma"):
        if isinstance(base.get(key), str) and base[key] != "theory":
            try:
                base[key] = float(base[key])
            except ValueError:
                raise ConfigError(f"{key} must be 'theory' or a number") from None
    if args.model:
        base["instance"] = {"source": "file", "path": args.model}
    if getattr(args, "kernel_class", None):
        base["instance"] = {"source": "class_file", "path": args.kernel_class}
    if args.instance:
        base["instance"] = json.loads(args.instance)
    for key, flag in (("output_csv", "csv"), ("output_json", "json"), ("output_summary", "summary")):
        if getattr(args, flag):
            base[key] = getattr(args, flag)
    return ExperimentConfig.from_dict(base)


def _cmd_run(args, algorithm: str) -> int:
    cfg = _experiment_config(args, algorithm)
    results = run_experiment(cfg)
    wrote = False
    if cfg.output_csv:
        emit(results, "csv", cfg.output_csv)
        wrote = True
    if cfg.output_json:
        emit(results, "json", cfg.output_json)
        wrote = True
    if cfg.output_summary:
        emit(aggregate(results), "json", cfg.output_summary)
        wrote = True
    if not wrote:
        sys.stdout.write(emit(results, "csv"))
    return EXIT_OK


def cmd_run_l(args) -> int:
    return _cmd_run(args, "icvar_l")


def cmd_run_g(args) -> int:
    return _cmd_run(args, "icvar_g")


def cmd_aggregate(args) -> int:
    results = []
    for path in args.results:
        results += results_from_json(Path(path).read_text())
    _write(emit(aggregate(results), args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _run_parser(sub, name, func, help_):
    p = sub.add_parser(name, help=help_)
    p.add_argument("--config", help="JSON file mirroring ExperimentConfig; flags override it")
    p.add_argument("--model", help="model JSON (overrides the configured instance)")
    p.add_argument("--instance", help="inline JSON instance spec, e.g. '{\"source\": \"hard\", ...}'")
    p.add_argument("--alpha", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--delta", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--csv", help="per-episode CSV output path")
    p.add_argument("--json", help="full JSON output path")
    p.add_argument("--summary", help="aggregate JSON output path")
    p.set_defaults(func=func)
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="icvar", description="Iterated-CVaR RL toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("model")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dp", help="optimal Iterated-CVaR values and policy")
    p.add_argument("model")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dp)

    p = sub.add_parser("eval", help="Iterated-CVaR value of a policy file (H x S integer array)")
    p.add_argument("model")
    p.add_argument("--policy", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-hard", help="emit the lower-bound instance")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--delta", type=float, help="fix delta instead of the K schedule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_hard)

    p = sub.add_parser("gen-random", help="emit a random model or kernel class")
    p.add_argument("--kind", choices=("mixture", "tabular", "class"), default="mixture")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--S", type=int, default=5)
    p.add_argument("--A", type=int, default=3)
    p.add_argument("--H", type=int, default=3)
    p.add_argument("--N", type=int, default=8, help="class size for --kind class")
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--state-rewards", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_random)

    p = _run_parser(sub, "run-l", cmd_run_l, "run ICVaR-L")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--beta", help="'theory' or a number")

    p = _run_parser(sub, "run-g", cmd_run_g, "run ICVaR-G")
    p.add_argument("--class", dest="kernel_class", help="kernel-class JSON with rewards")
    p.add_argument("--gamma", help="'theory' or a number")
    p.add_argument("--grid-epsilon", dest="grid_epsilon", type=float)

    p = sub.add_parser("eluder", help="brute-force eluder dimension of a small class")
    p.add_argument("cls", metavar="class.json")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eluder)

    p = sub.add_parser("aggregate", help="cross-seed summary of result JSON files")
    p.add_argument("results", nargs="+")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_aggregate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (IcvarError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
