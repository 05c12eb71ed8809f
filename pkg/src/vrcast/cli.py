"""Command-line entry point.

Exit codes
----------
0  success
1  ``verify`` found a constraint violation or an objective mismatch
2  invalid scenario file or arguments (the message names the field)
3  solver failure
4  oracle enumeration budget exceeded
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .channel import CapacityError
from .config import ConfigError, LoadedConfig, result_from_dict, result_to_dict, sweep_params, write_atomic
from .experiments import PARAMS, SCHEMES, SweepSpec, run_sweep, write_csv
from .oracle import OracleBudget, SelectionCache, brute_force_optimal, verify_solution
from .problems import CASE_NAMES, CaseSpec, check_ordering, solve_all_cases, solve_case
from .results import SolverError

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER, EXIT_BUDGET = 0, 1, 2, 3, 4

DIAGNOSTIC_FIELDS = ("run", "iteration", "stage", "rho", "dual", "primal", "gap", "objective", "penalty", "columns")

log = logging.getLogger("vrcast")


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(text, out)
    else:
        sys.stdout.write(text)


def _diagnostic_rows(result) -> list[dict]:
    runs = result.info.get("runs")
    if runs is None:
        return [{"run": 0, **rec} for rec in result.history]
    return [{"run": i, **rec} for i, trace in enumerate(runs) for rec in trace]


def _write_diagnostics(result, path: str) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=DIAGNOSTIC_FIELDS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in _diagnostic_rows(result):
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    write_atomic(buf.getvalue(), path)


def cmd_solve(args) -> int:
    cfg = LoadedConfig.read(args.config)
    scenario = cfg.scenario()
    rng = np.random.default_rng(cfg.seed)
    result = solve_case(CaseSpec.from_name(args.case), scenario, cfg.settings, rng=rng)
    _emit(json.dumps(result_to_dict(args.case, scenario, result), indent=1) + "\n", args.out)
    if args.diagnostics:
        _write_diagnostics(result, args.diagnostics)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = LoadedConfig.read(args.config)
    scenario = cfg.scenario()
    budget = OracleBudget(max_enumerations=args.budget)
    result = brute_force_optimal(CaseSpec.from_name(args.case), scenario, budget)
    _emit(json.dumps(result_to_dict(args.case, scenario, result), indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_check_ordering(args) -> int:
    cfg = LoadedConfig.read(args.config)
    scenario = cfg.scenario()
    if args.oracle:
        budget = OracleBudget(max_enumerations=args.budget)
        cache = SelectionCache(scenario, budget.dual)
        values = {c: brute_force_optimal(CaseSpec.from_name(c), scenario, budget, cache).objective for c in CASE_NAMES}
    else:
        solved = solve_all_cases(scenario, cfg.settings, np.random.default_rng(cfg.seed))
        values = {c: r.objective for c, r in solved.items()}
    checks = check_ordering(values, rel_slack=args.slack)
    for name in CASE_NAMES:
        print(f"{name:5s} {float(values[name])!r}")
    for chk in checks:
        print(chk)
    return EXIT_OK if all(c.ok for c in checks) else EXIT_VERIFY


def cmd_sweep(args) -> int:
    cfg = LoadedConfig.read(args.config)
    base = sweep_params(cfg.document)
    exp = cfg.document.get("experiment", {})
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--values", f"not a comma-separated list of numbers: {args.values!r}") from None
    if args.param in ("K", "delta"):
        if any(v != int(v) for v in values):
            raise ConfigError("--values", f"{args.param} takes integers")
        values = [int(v) for v in values]
    settings = cfg.settings
    if "restarts" not in cfg.document.get("solver", {}):
        settings = replace(settings, restarts=3)
    try:
        spec = SweepSpec(
            param=args.param,
            values=values,
            base=base,
            realizations=int(args.realizations or exp.get("realizations", 50)),
            seed=int(exp.get("seed", cfg.seed)),
            schemes=tuple(args.schemes.split(",")) if args.schemes else tuple(exp.get("schemes", SCHEMES)),
            ccp=settings,
        )
    except ValueError as exc:
        raise ConfigError("experiment", str(exc)) from None
    rows = run_sweep(spec, args.workers)
    write_csv(rows, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = LoadedConfig.read(args.config)
    scenario = cfg.scenario()
    with open(args.result) as fh:
        case, result = result_from_dict(json.load(fh))
    report = verify_solution(CaseSpec.from_name(case), scenario, result)
    for name, value in report.residuals.items():
        print(f"{name:24s} {value:.3e}")
    print(f"{'objective (recomputed)':24s} {report.objective!r}")
    print(f"{'objective (stored)':24s} {report.reported!r}")
    ok = report.ok(args.tol)
    print("OK" if ok else "VIOLATION")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrcast", description="Energy-minimal multicast of tiled 360-degree video.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one case with the dual/convex-concave solvers")
    p.add_argument("--case", choices=CASE_NAMES, required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="result JSON (default: stdout)")
    p.add_argument("--diagnostics", help="CSV of per-iteration solver records")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact optimum by enumerating every quality selection")
    p.add_argument("--case", choices=CASE_NAMES, required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--budget", type=int, default=OracleBudget().max_enumerations, help="max selections to enumerate")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check-ordering", help="solve all four cases and check the orderings between them")
    p.add_argument("--config", required=True)
    p.add_argument("--oracle", action="store_true", help="use exact enumeration instead of the heuristic")
    p.add_argument("--budget", type=int, default=OracleBudget().max_enumerations)
    p.add_argument("--slack", type=float, default=1e-6, help="relative slack of each inequality")
    p.set_defaults(func=cmd_check_ordering)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep of one parameter, written as CSV")
    p.add_argument("--param", choices=PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--realizations", type=int)
    p.add_argument("--schemes", help=f"comma-separated subset of {','.join(SCHEMES)}")
    p.add_argument("--workers", type=int, help="worker processes (default: VRCAST_WORKERS or CPU count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="recheck a stored result against its scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration at {exc.path or '<root>'}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"diagnostics: {sorted(diag)}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
