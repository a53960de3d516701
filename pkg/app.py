import argparse
import csv
import logging
import sys

import numpy as np

from src.agents.bound_graph import BoundGraph
from src.clients.solver_client import EMBEDDED, EXTERNAL
from src.config import Config
from src.engine.bound_result import is_success
from src.engine.moment import build_moment_problem, lower_bound, realify
from src.engine.quadrature import gauss_radau
from src.engine.run_records import RunRecord, RunRecordStore
from src.engine.upperbound import DEFAULT_MAX_ITERS, DEFAULT_RESTARTS, upper_bound
from src.errors import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, ArgumentError, SquashError, exit_code_for
from src.quantum.fdiv import pure_state_bounds
from src.quantum.qstate import state_hash, werner
from src.utils.sdpa_format import write_sdpa
from src.utils.state_io import load_state, save_state

logger = logging.getLogger("squash_bounds")

FIGURE_COLUMNS = [
    "p", "lower_raw", "lower_clamped", "upper", "m", "k", "d_D", "d_E",
    "status_lower", "status_upper", "seconds_lower", "seconds_upper",
]


def parse_grid(text):
    """'start:step:stop' (inclusive) or a comma-separated list."""
    text = (text or "").strip()
    if not text:
        raise ArgumentError("p grid is empty")
    try:
        if ":" in text:
            start, step, stop = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ArgumentError(f"grid step must be positive, got {step}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            grid = [round(start + i * step, 12) for i in range(max(count, 0))]
        else:
            grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ArgumentError(f"cannot parse p grid {text!r}: {e}")
    if not grid:
        raise ArgumentError(f"p grid {text!r} has no points")
    return grid


def solver_options(args):
    return Config.get_solver_options(
        backend=getattr(args, "backend", None),
        external_path=getattr(args, "solver_path", None),
        cvxpy_solver=getattr(args, "solver", None),
        large_block_solver=getattr(args, "solver", None),
        abs_tol=getattr(args, "abs_tol", None),
        rel_tol=getattr(args, "rel_tol", None),
        max_iters=getattr(args, "solver_max_iters", None),
        time_limit=getattr(args, "time_limit", None),
    )


def record(args, rho, command, parameters, result):
    entry = RunRecord(state_hash(rho), command, parameters, result)
    if not args.no_records:
        RunRecordStore(args.records).append(entry)
    if getattr(args, "out", None):
        entry.dump(args.out)
    return entry


def print_result(result):
    print(f"value: {result.value:.10f}")
    print(f"clamped: {result.clamped:.10f}")
    print(f"status: {result.solver_status}")
    if result.quadrature_gap is not None:
        print(f"quadrature_gap: {result.quadrature_gap:.10f}")
    if result.upper_value is not None:
        print(f"upper_value: {result.upper_value:.10f}")
    print(f"seconds: {result.wall_time:.3f}")


# --- Commands ---

def cmd_werner(args):
    rho = werner(args.d, args.p)
    save_state(rho, args.out)
    print(f"Werner state d={args.d} p={args.p} written to {args.out}")
    return EXIT_OK


def cmd_lower(args):
    rho = load_state(args.state)
    if args.closed_form:
        result = pure_state_bounds(rho, args.m)
    else:
        result = lower_bound(rho, args.m, args.k, solver_options(args))
    record(args, rho, "lower", {"m": args.m, "k": args.k, "closed_form": args.closed_form}, result)
    print_result(result)
    return EXIT_OK if is_success(result.solver_status) else EXIT_SOLVER


def cmd_upper(args):
    rho = load_state(args.state)
    rule = gauss_radau(args.m) if args.m else None
    result = upper_bound(rho, args.dD, args.dE, args.restarts, args.max_iters, args.seed,
                         rule=rule, workers=args.workers)
    params = {"d_D": args.dD, "d_E": args.dE, "restarts": args.restarts, "seed": args.seed,
              "max_iters": args.max_iters, "m": args.m}
    record(args, rho, "upper", params, result)
    print_result(result)
    return EXIT_OK if is_success(result.solver_status) else EXIT_SOLVER


def cmd_bounds(args):
    rho = load_state(args.state)
    final = BoundGraph().run(
        rho, m=args.m, k=args.k, d_D=args.dD, d_E=args.dE, restarts=args.restarts,
        max_iters=args.max_iters, seed=args.seed, workers=args.workers,
        solver_options=solver_options(args), closed_form=args.closed_form,
    )
    params = {"m": args.m, "k": args.k, "d_D": args.dD, "d_E": args.dE, "restarts": args.restarts, "seed": args.seed}
    code = EXIT_OK
    for side in ("lower", "upper"):
        result = final[side]
        record(args, rho, f"bounds:{side}", params, result)
        print(f"[{side}]")
        print_result(result)
        if not result.succeeded:
            code = EXIT_SOLVER
    print(f"sandwich_ok: {final['sandwich_ok']}")
    return code


def figure_rows(args, graph=None):
    graph = graph or BoundGraph()
    grid = parse_grid(args.grid)
    opts = solver_options(args)
    rows = []
    for p in grid:
        rho = werner(args.d, p)
        final = graph.run(
            rho, m=args.m, k=args.k, d_D=args.dD, d_E=args.dE, restarts=args.restarts,
            max_iters=args.max_iters, seed=args.seed, workers=args.workers, solver_options=opts,
            werner={"d": args.d, "p": p},
        )
        lower, upper = final["lower"], final["upper"]
        rows.append({
            "p": f"{p:.6g}",
            "lower_raw": f"{lower.value:.10g}",
            "lower_clamped": f"{lower.clamped:.10g}",
            "upper": f"{upper.value:.10g}",
            "m": args.m,
            "k": args.k,
            "d_D": args.dD,
            "d_E": args.dE,
            "status_lower": lower.solver_status,
            "status_upper": upper.solver_status,
            "seconds_lower": f"{lower.wall_time:.3f}",
            "seconds_upper": f"{upper.wall_time:.3f}",
        })
        logger.info("p=%.2f lower=%.6f upper=%.6f", p, lower.value, upper.value)
    return rows


def cmd_figure1(args):
    rows = figure_rows(args)
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=FIGURE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"{len(rows)} rows written to {args.out}")
    failed = [r for r in rows if not (is_success(r["status_lower"]) and is_success(r["status_upper"]))]
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_quad(args):
    rule = gauss_radau(args.m)
    for row in rule.csv_rows():
        print(row)
    return EXIT_OK


def cmd_export(args):
    rho = load_state(args.state)
    instance = realify(build_moment_problem(rho, gauss_radau(args.m), args.k))
    write_sdpa(instance, args.out)
    print(f"SDPA instance ({instance.num_vars} variables, block {instance.block_side}) written to {args.out}")
    return EXIT_OK


# --- Parser ---

def _add_solver_flags(parser):
    parser.add_argument("--backend", choices=[EMBEDDED, EXTERNAL])
    parser.add_argument("--solver", help="cvxpy solver for every block size (default: SQUASH_CVXPY_SOLVER, SCS above SQUASH_LARGE_BLOCK_SIDE)")
    parser.add_argument("--solver-path", help="external SDPA-compatible binary (default: SQUASH_SDP_SOLVER)")
    parser.add_argument("--abs-tol", type=float)
    parser.add_argument("--rel-tol", type=float)
    parser.add_argument("--solver-max-iters", type=int)
    parser.add_argument("--time-limit", type=float)


def _add_upper_flags(parser, required=True):
    parser.add_argument("--dD", type=int, required=required)
    parser.add_argument("--dE", type=int, required=required)
    parser.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    parser.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="squash-bounds", description="Bounds on the squashed entanglement")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--records", help="run-record file (default: SQUASH_RECORDS_PATH)")
    parser.add_argument("--no-records", action="store_true", help="do not append a run record")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("werner", help="write a Werner state")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_werner)

    p = sub.add_parser("lower", help="SDP lower bound")
    p.add_argument("state")
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--closed-form", action="store_true", help="pure states: exact E_sq^(m) instead of the SDP")
    p.add_argument("--out")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("upper", help="heuristic upper bound")
    p.add_argument("state")
    p.add_argument("--m", type=int, help="minimise the E_sq^(m) objective with this many nodes")
    p.add_argument("--out")
    _add_upper_flags(p)
    p.set_defaults(func=cmd_upper)

    p = sub.add_parser("bounds", help="lower and upper bound together")
    p.add_argument("state")
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--closed-form", action="store_true")
    p.add_argument("--out")
    _add_upper_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("figure1", help="Werner-state sweep as CSV")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--grid", default="0:0.1:0.5", help="start:step:stop or comma list")
    p.add_argument("--out", required=True)
    _add_upper_flags(p, required=False)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_figure1, dD=4, dE=4)

    p = sub.add_parser("quad", help="print Gauss-Radau nodes and weights")
    p.add_argument("--m", type=int, required=True)
    p.set_defaults(func=cmd_quad)

    p = sub.add_parser("export", help="write the level-k SDP in SDPA sparse format")
    p.add_argument("state")
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    Config.configure_logging("DEBUG" if args.verbose else None)
    try:
        Config.validate()
        return args.func(args)
    except SquashError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
