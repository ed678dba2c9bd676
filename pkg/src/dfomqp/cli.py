"""Command-line front end: ``solve``, ``oracle``, ``generate`` and ``bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .dual import DfomSolver, Recovery, SolverConfig, Status
from .io import dump_problem, load_problem, write_trace
from .model import InfeasibleSpecError
from .oracle import OracleInfeasible, oracle_dual_radius, oracle_solve
from .tuning import Method

EXIT_OK = 0
EXIT_CAP = 2
EXIT_BAD_INPUT = 3


def _auto_float(text: str) -> float | None:
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from exc


def _vec(v: np.ndarray) -> list[float]:
    return [float(x) for x in v]


def explain(solver: DfomSolver) -> str:
    c, s = solver.constants, solver.schedule
    lines = [
        f"case            : {s.case.value} (lambda_min(Q) = {c.lam_min_Q:.6g}, lambda_max(Q) = {c.lam_max_Q:.6g})",
        f"rho             : {c.rho:.6g}" + ("" if s.rho_is_theory else "  (user value, not 8 R_d^2 / eps)"),
        f"||G||           : {c.norm_G:.6g}",
        f"L_d             : {c.L_d:.6g} = ||G||^2 / (lambda_min(Q) + rho ||G||^2)",
        f"L_L, sigma_L    : {c.L_L:.6g}, {c.sigma_L:.6g}",
        f"R_d (estimate)  : {s.dual_radius:.6g}",
        f"epsilon         : {s.epsilon:.6g}",
        f"epsilon_in      : {solver.epsilon_in:.6g}" + (" (theory)" if solver.epsilon_in == s.epsilon_in else " (user)"),
        f"k_out           : {s.k_out}",
        f"k_in estimate   : {s.k_in_estimate}",
        f"k_total estimate: {s.k_total_estimate}" + (" (approximate)" if s.approximate else ""),
        f"inner method    : {solver.oracle.momentum.value}, stop={solver.oracle.stop.mode.value}",
    ]
    return "\n".join(lines)


def cmd_solve(args) -> int:
    prob = load_problem(args.file)
    cfg = SolverConfig(
        epsilon=args.epsilon,
        method=Method(args.method),
        rho=args.rho,
        epsilon_in=args.epsilon_in,
        recovery=Recovery(args.recovery),
        max_outer=args.max_outer,
        dual_radius=args.dual_radius,
        redefine_dgm=not args.no_redefine,
    )
    solver = DfomSolver(prob, cfg)
    if args.explain:
        print(explain(solver), file=sys.stderr)
    rep = solver.run()
    if args.trace:
        write_trace(args.trace, rep.trace)
    u = rep.solution(cfg.recovery)
    out = {
        "status": rep.status.value,
        "stop_reason": rep.stop_reason,
        "u": _vec(u),
        "objective": rep.primal_obj_last if cfg.recovery is Recovery.LAST else rep.primal_obj_avg,
        "infeasibility": rep.infeas_last if cfg.recovery is Recovery.LAST else rep.infeas_avg,
        "lambda": _vec(rep.lambda_final),
        "dual_value": rep.dual_value_estimate,
        "outer_iters": rep.outer_iters,
        "inner_iters": rep.total_inner_iters,
        "matvecs": rep.total_matvecs,
    }
    print(json.dumps(out, indent=1))
    if rep.status is Status.CONVERGED:
        return EXIT_OK
    return EXIT_CAP if rep.status is Status.MAX_ITERATIONS else EXIT_BAD_INPUT


def cmd_oracle(args) -> int:
    prob = load_problem(args.file)
    sol = oracle_solve(prob)
    out = {
        "u_star": _vec(sol.u_star),
        "lambda_star": _vec(sol.lambda_star),
        "box_multipliers": _vec(sol.box_multipliers),
        "f_star": sol.f_star,
        "active_set": sol.active_set,
        "kkt_residual": sol.kkt_residual,
        "multipliers_unique": bool(sol.multipliers_unique),
        "dual_radius": oracle_dual_radius(sol),
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_generate(args) -> int:
    family = bench.Family(args.family)
    rng = np.random.default_rng(args.seed)
    prob = bench.generate_random_qp(args.n, args.p or bench.default_rows(args.n), family, rng)
    text = dump_problem(prob)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_EXPERIMENTS = {
    "sensitivity": (bench.Family.STRONGLY_CONVEX_INEQ, (20,), 10),
    "eq-timing": (bench.Family.PSD_EQ, (4, 6, 8, 10), 10),
    "last-vs-avg": (bench.Family.STRONGLY_CONVEX_INEQ, (10, 50, 100), 25),
}


def cmd_bench(args) -> int:
    family, n_list, count = _EXPERIMENTS[args.experiment]
    spec = bench.BenchSpec(
        family=family,
        n_list=tuple(args.n) if args.n else n_list,
        instances_per_n=args.instances or count,
        seed=args.seed,
        epsilon=args.epsilon,
        max_outer=args.max_outer,
        wall_time=not args.no_wall_time,
        workers=args.workers,
    )
    if args.experiment == "sensitivity":
        rows = bench.run_sensitivity(spec)
    elif args.experiment == "eq-timing":
        rows = bench.run_eq_timing(spec)
    else:
        rows = bench.run_last_vs_average(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.experiment}.csv"
    bench.write_summary(path, rows)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfomqp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("file")
    s.add_argument("--method", choices=[m.value for m in Method], default="dfgm")
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--rho", type=_auto_float, default=None, help="penalty or 'auto'")
    s.add_argument("--epsilon-in", type=_auto_float, default=None, help="inner accuracy or 'auto'")
    s.add_argument("--recovery", choices=[r.value for r in Recovery], default="last")
    s.add_argument("--max-outer", type=int, default=100_000)
    s.add_argument("--dual-radius", type=float, default=1.0, help="estimate of ||lambda* - lambda0||")
    s.add_argument("--no-redefine", action="store_true", help="skip the DGM final dual-point step")
    s.add_argument("--trace", help="write the per-iteration CSV here")
    s.add_argument("--explain", action="store_true", help="print the derived constants to stderr")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="exact solution by active-set enumeration (small n)")
    o.add_argument("file")
    o.set_defaults(func=cmd_oracle)

    g = sub.add_parser("generate", help="write a random problem file")
    g.add_argument("--family", choices=[f.value for f in bench.Family], default="StronglyConvexIneq")
    g.add_argument("--n", type=int, default=5)
    g.add_argument("--p", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bench", help="run a benchmark experiment")
    b.add_argument("experiment", choices=sorted(_EXPERIMENTS))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="bench_out")
    b.add_argument("--n", type=int, nargs="+")
    b.add_argument("--instances", type=int)
    b.add_argument("--epsilon", type=float, default=0.01)
    b.add_argument("--max-outer", type=int, default=20_000)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--no-wall-time", action="store_true", help="write wall_ns = 0 for reproducible files")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InfeasibleSpecError, OracleInfeasible, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
