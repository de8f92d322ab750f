"""Command-line front end: plan, verify, sweep, and compare.

Exit codes: 0 success (plan: optimal; verify: all checks passed),
2 infeasible plan / failed statistical check, 1 any error.
All randomness flows through an explicit --seed, and floats are printed with
17 significant digits, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import sys as _sys
import time
from dataclasses import replace
from pathlib import Path

from .cost import evaluate_cost
from .errors import LiftPlanError
from .files import (
    check_dimensions, load_scenario, load_trajectory, trajectory_to_dict,
)
from .ir import dump_text
from .jsonio import dump_json
from .montecarlo import rollout
from .program import compile_program, restrict_open_loop
from .scenarios import build_scenario, run_method, run_sweep, sweep_to_csv
from .solver import Status

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="liftplan",
        description="Plan, verify, and sweep chance-constrained stochastic "
                    "trajectory problems.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="solve one scenario and write the plan")
    plan.add_argument("scenario", type=Path)
    plan.add_argument("--method", choices=("exact", "baseline", "openloop"),
                      default="exact")
    plan.add_argument("--qcc", choices=("lmi", "quadratic", "markov"))
    plan.add_argument("--out", type=Path, help="trajectory output path "
                      "(default: <scenario>.traj.json)")
    plan.add_argument("--dump-program", type=Path,
                      help="write the compiled conic program as text")
    plan.add_argument("--tol", type=float, help="override solver tolerance")
    plan.add_argument("--seed", type=int, default=0)

    verify = sub.add_parser("verify", help="Monte-Carlo check of a plan")
    verify.add_argument("trajectory", type=Path)
    verify.add_argument("scenario", type=Path)
    verify.add_argument("--samples", type=int, default=100_000)
    verify.add_argument("--seed", type=int, default=0)

    sweep = sub.add_parser("sweep", help="run a grid of scenarios")
    sweep.add_argument("sweepfile", type=Path)
    sweep.add_argument("--out", type=Path, help="CSV output path (default stdout)")
    sweep.add_argument("--methods", help="comma-separated method list override")
    sweep.add_argument("--samples", type=int, default=0,
                       help="Monte-Carlo samples per optimal cell (0 = skip)")
    sweep.add_argument("--seed", type=int, default=0)

    compare = sub.add_parser("compare", help="run several methods on one scenario")
    compare.add_argument("scenario", type=Path)
    compare.add_argument("--methods", default="exact,baseline")
    compare.add_argument("--seed", type=int, default=0)
    return ap


def _cmd_plan(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.qcc is not None:
        cfg = replace(cfg, qcc_mode=args.qcc)
    if args.tol is not None:
        cfg = replace(cfg, tolerance=args.tol)
    sys_, cost, constraints = build_scenario(cfg)

    if args.dump_program is not None:
        prog = compile_program(sys_, cost, constraints)
        if args.method == "openloop":
            prog = restrict_open_loop(prog)
        args.dump_program.write_text(dump_text(prog))

    t0 = time.perf_counter()
    res = run_method(sys_, cost, constraints, args.method, cfg.solve_options())
    solve_ms = 1e3 * (time.perf_counter() - t0)

    summary = {
        "scenario": cfg.name or cfg.kind,
        "method": args.method,
        "status": res.status.value,
        "objective": res.objective,
        "iterations": res.iterations,
        "solve_ms": solve_ms,
    }
    if res.status is Status.OPTIMAL:
        out = args.out or args.scenario.with_suffix(".traj.json")
        out.write_text(dump_json(trajectory_to_dict(res.trajectory)) + "\n")
        summary["trajectory"] = str(out)
    print(dump_json(summary))
    if res.status is Status.OPTIMAL:
        return EXIT_OK
    if res.status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    print(f"solver failed: {res.diagnostics}", file=_sys.stderr)
    return EXIT_ERROR


def _cmd_verify(args) -> int:
    if args.samples <= 0:
        print("sample count must be positive", file=_sys.stderr)
        return EXIT_ERROR
    cfg = load_scenario(args.scenario)
    sys_, cost, constraints = build_scenario(cfg)
    traj = load_trajectory(args.trajectory)
    check_dimensions(sys_, traj)

    report = rollout(sys_, traj, constraints, cost,
                     seed=args.seed, count=args.samples)
    objective = evaluate_cost(sys_, cost, traj)

    rate_ok = all(c.rate >= c.target - 3.0 * c.stderr for c in report.checks)
    # epsilon floor so that noise-free plans compare exactly-computed costs
    cost_tol = 3.0 * report.cost_stderr + 1e-9 * (1.0 + abs(objective))
    cost_ok = abs(report.cost_mean - objective) <= cost_tol

    payload = report.to_dict()
    payload["objective"] = objective
    payload["rate_check"] = rate_ok
    payload["cost_check"] = cost_ok
    print(dump_json(payload))
    return EXIT_OK if (rate_ok and cost_ok) else EXIT_INFEASIBLE


def _cmd_sweep(args) -> int:
    import json

    from .errors import ConfigError
    from .files import scenario_from_dict

    try:
        data = json.loads(args.sweepfile.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{args.sweepfile}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )
    if not isinstance(data, dict) or "cells" not in data:
        raise ConfigError("sweep file must be an object with a 'cells' list")
    cells = [
        scenario_from_dict(cell, name=cell.get("name", f"cell{i}"))
        for i, cell in enumerate(data["cells"])
    ]
    methods = data.get("methods", ["exact"])
    if args.methods:
        methods = args.methods.split(",")

    rows = run_sweep(cells, methods, mc_samples=args.samples, seed=args.seed)
    csv = sweep_to_csv(rows)
    if args.out:
        args.out.write_text(csv)
    else:
        print(csv, end="")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = load_scenario(args.scenario)
    methods = args.methods.split(",")
    rows = run_sweep([cfg], methods, seed=args.seed)
    print(dump_json({"scenario": cfg.name or cfg.kind, "results": rows}))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            return _cmd_plan(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "compare":
            return _cmd_compare(args)
    except LiftPlanError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
