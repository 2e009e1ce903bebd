"""Command-line front end.

Subcommands: exact, mb-run, mf-run, estimate, bounds, figure, validate.
Exit codes: 0 success, 2 configuration error, 3 numeric/divergence error in
a mandatory computation, 4 IO error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bounds import ErrorBudget, PlantNorms
from .errors import (
    ConfigurationError,
    ConvergenceError,
    InstabilityError,
    NumericError,
    OverflowedRollout,
)
from .estimators import estimate_gradient_covariance
from .exact import exact_quantities, solve_dare
from .harness import (
    _json_safe,
    config_from_dict,
    emit_bounds_report,
    figure_preset,
    parse_config,
    run_monte_carlo,
)
from .sim import RolloutOracle, SeedSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lqrpg",
        description="Policy-gradient optimization for average-cost LQR",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="path to a JSON experiment config")
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed override")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--repetitions", type=int, default=None,
                        help="Monte Carlo repetition override")
        sp.add_argument("--threads", default="1",
                        help="worker threads for repetitions (int or 'auto')")
        sp.add_argument("--format", choices=("csv", "json"), default=None,
                        help="artifact format override")

    common(sub.add_parser("exact", help="print exact closed-loop quantities "
                                        "and the optimal solution"))
    common(sub.add_parser("mb-run", help="run a model-based optimizer"))
    common(sub.add_parser("mf-run", help="run a model-free optimizer"))
    common(sub.add_parser("estimate", help="one-shot gradient/covariance "
                                           "estimate with error vs exact"))
    bounds = sub.add_parser("bounds", help="print the certificate report")
    common(bounds)
    bounds.add_argument("--cost", type=float, default=None,
                        help="cost level c (default: cost of the initial gain)")

    fig = sub.add_parser("figure", help="run a figure preset")
    fig.add_argument("name", choices=("fig1", "fig2", "fig3", "fig4"))
    fig.add_argument("--seed", type=int, default=0)
    fig.add_argument("--out", default="out")
    fig.add_argument("--repetitions", type=int, default=None)
    fig.add_argument("--threads", default="1")
    fig.add_argument("--format", choices=("csv", "json"), default=None)

    val = sub.add_parser("validate", help="validate a config file")
    val.add_argument("config", help="path to a JSON experiment config")
    return p


def _load(args):
    cfg = parse_config(args.config)
    overrides = dict(cfg.raw)
    if args.seed is not None:
        overrides.setdefault("monte_carlo", {})
        overrides["monte_carlo"] = dict(overrides["monte_carlo"])
        overrides["monte_carlo"]["master_seed"] = args.seed
    if args.repetitions is not None:
        overrides.setdefault("monte_carlo", {})
        overrides["monte_carlo"] = dict(overrides["monte_carlo"])
        overrides["monte_carlo"]["repetitions"] = args.repetitions
    if args.out is not None or args.format is not None:
        overrides["output"] = dict(overrides.get("output", {}))
        if args.out is not None:
            overrides["output"]["dir"] = args.out
        if args.format is not None:
            overrides["output"]["format"] = args.format
    return config_from_dict(overrides)


def _threads(args):
    return args.threads if args.threads == "auto" else int(args.threads)


def _cmd_exact(args) -> int:
    cfg = _load(args)
    q = exact_quantities(cfg.plant, cfg.K0)
    opt = solve_dare(cfg.plant)
    payload = {
        "gain": cfg.K0, "P": q.P, "Sigma": q.Sigma, "E": q.E,
        "cost": q.cost, "grad": q.grad,
        "K_star": opt.K_star, "P_star": opt.P_star,
        "Sigma_star": opt.Sigma_star, "C_star": opt.C_star,
    }
    if (args.format or cfg.out_format) == "json":
        print(json.dumps(_json_safe(payload), indent=2))
    else:
        for key, val in payload.items():
            if isinstance(val, np.ndarray):
                print(f"{key} =")
                for row in np.atleast_2d(val):
                    print("  " + " ".join(format(x, ".17g") for x in row))
            else:
                print(f"{key} = {format(val, '.17g')}")
    return EXIT_OK


def _cmd_run(args, kind: str) -> int:
    cfg = _load(args)
    wanted = ("mb_pgd", "mb_npg", "mb_gauss_newton", "noisy_pgd") \
        if kind == "mb" else ("mf_pgd", "mf_npg")
    if cfg.optimizer not in wanted:
        raise ConfigurationError(
            f"optimizer {cfg.optimizer!r} is not valid for {kind}-run "
            f"(expected one of {wanted})"
        )
    bundle = run_monte_carlo(cfg, out_dir=args.out, threads=_threads(args))
    print(f"wrote {len(bundle.run_paths)} run file(s) to {bundle.out_dir}")
    if any(t.terminal_reason == "diverged" for t in bundle.traces):
        print("warning: at least one run diverged (recorded in traces)")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = _load(args)
    if cfg.rollout is None:
        raise ConfigurationError("estimate requires explicit rollout parameters")
    oracle = RolloutOracle(cfg.plant, SeedSpec(cfg.master_seed), L0=cfg.rollout.L0)
    grad_est, cov_est = estimate_gradient_covariance(
        oracle, cfg.K0, cfg.rollout, run_id=0
    )
    payload = {
        "grad_estimate": grad_est.value,
        "cov_estimate": cov_est.value,
        "failed": grad_est.failed,
        "n": cfg.rollout.n, "l": cfg.rollout.l, "r": cfg.rollout.r,
    }
    if not grad_est.failed:
        q = exact_quantities(cfg.plant, cfg.K0)
        payload["grad_exact"] = q.grad
        payload["cov_exact"] = q.Sigma
        payload["grad_error_fro"] = float(
            np.linalg.norm(grad_est.value - q.grad, "fro")
        )
        payload["cov_error_2"] = float(np.linalg.norm(cov_est.value - q.Sigma, 2))
    print(json.dumps(_json_safe(payload), indent=2))
    if grad_est.failed:
        print("estimate failed: a rollout overflowed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_bounds(args) -> int:
    cfg = _load(args)
    cost = args.cost
    if cost is None:
        cost = exact_quantities(cfg.plant, cfg.K0).cost
    budget = cfg.budget or ErrorBudget.even_split(0.4, 0.3)
    fmt = args.format or cfg.out_format
    report = emit_bounds_report(cfg.plant, cost, budget, fmt="json" if fmt == "json" else "text")
    if fmt == "json":
        print(json.dumps(report, indent=2))
    else:
        print(report)
    return EXIT_OK


def _cmd_figure(args) -> int:
    cfg = figure_preset(args.name, repetitions=args.repetitions,
                        master_seed=args.seed)
    bundle = run_monte_carlo(cfg, out_dir=args.out, threads=_threads(args))
    n_runs = sum(len(b.run_paths) for b in bundle.sub_bundles) or len(bundle.run_paths)
    print(f"wrote {n_runs} run file(s) under {bundle.out_dir}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    parse_config(args.config)
    print("config OK")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "exact":
            return _cmd_exact(args)
        if args.command == "mb-run":
            return _cmd_run(args, "mb")
        if args.command == "mf-run":
            return _cmd_run(args, "mf")
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "bounds":
            return _cmd_bounds(args)
        if args.command == "figure":
            return _cmd_figure(args)
        if args.command == "validate":
            return _cmd_validate(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InstabilityError, NumericError, ConvergenceError, OverflowedRollout) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
