"""Random QP generation and the three benchmark experiments."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dual import Recovery, SolveReport, SolverConfig, StopRule, solve
from .io import write_rows
from .model import ConeKind, QpProblem
from .oracle import MAX_N, MAX_P, OracleSolution, oracle_dual_radius, oracle_solve, reference_solve
from .tuning import Method

logger = logging.getLogger(__name__)

BOX = 10.0
SUMMARY_FIELDS = [
    "family",
    "n",
    "seed",
    "method",
    "recovery",
    "outer_iters",
    "inner_iters",
    "matvecs",
    "wall_ns",
    "final_gap",
    "final_infeas",
    "index",
    "eps_in",
    "status",
]
ENUMERATION_LIMIT = 3**8 * 2**6  # assignments the enumeration oracle handles quickly
SENSITIVITY_EPS_IN = (1e-1, 1e-2, 1e-3, 1e-4)


class Family(enum.Enum):
    STRONGLY_CONVEX_INEQ = "StronglyConvexIneq"
    PSD_EQ = "PsdEq"


def generate_random_qp(n: int, p: int, family: Family, rng: np.random.Generator) -> QpProblem:
    """Random instance with a strictly feasible interior point.

    StronglyConvexIneq: ``Q = A'A + I``, inequality rows. PsdEq: ``Q = A'A``
    with ``A`` of ``ceil(n/2)`` rows, so ``Q`` is singular, and equality rows.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if family is Family.PSD_EQ:
        A = rng.standard_normal((math.ceil(n / 2), n))
        Q = A.T @ A
    else:
        A = rng.standard_normal((n, n))
        Q = A.T @ A + np.eye(n)
    Q = 0.5 * (Q + Q.T)
    q = rng.standard_normal(n)
    G = rng.standard_normal((p, n))
    u0 = rng.uniform(-0.5 * BOX, 0.5 * BOX, n)
    if family is Family.PSD_EQ:
        g = -G @ u0
        cones = [ConeKind.ZERO] * p
    else:
        g = -G @ u0 - np.abs(rng.standard_normal(p))
        cones = [ConeKind.NONPOS] * p
    return QpProblem.from_arrays(Q, q, G, g, cones, np.full(n, -BOX), np.full(n, BOX))


def instance_rng(seed: int, family: Family, n: int, index: int) -> np.random.Generator:
    tag = 0 if family is Family.STRONGLY_CONVEX_INEQ else 1
    return np.random.default_rng([seed, tag, n, index])


def default_rows(n: int) -> int:
    return math.ceil(n / 2)


def reference(prob: QpProblem) -> OracleSolution:
    """Enumeration oracle when affordable, interior point otherwise."""
    if prob.n <= MAX_N and prob.p <= MAX_P and 3**prob.n * 2 ** int(prob.nonpos.sum()) <= ENUMERATION_LIMIT:
        return oracle_solve(prob)
    return reference_solve(prob)


@dataclasses.dataclass
class Instance:
    family: Family
    n: int
    seed: int
    index: int
    prob: QpProblem
    ref: OracleSolution

    @property
    def dual_radius(self) -> float:
        return max(oracle_dual_radius(self.ref), 1e-8)


def make_instance(family: Family, n: int, seed: int, index: int, p: int | None = None) -> Instance:
    prob = generate_random_qp(n, p or default_rows(n), family, instance_rng(seed, family, n, index))
    ref = reference(prob)
    if prob.infeasibility(ref.u_star) > 1e-8:
        raise RuntimeError("reference solution failed the feasibility pre-check")
    return Instance(family, n, seed, index, prob, ref)


@dataclasses.dataclass(frozen=True)
class BenchSpec:
    family: Family
    n_list: tuple[int, ...]
    instances_per_n: int
    seed: int = 0
    epsilon: float = 0.01
    methods: tuple[tuple[Method, Recovery], ...] = (
        (Method.DGM, Recovery.LAST),
        (Method.DGM, Recovery.AVERAGE),
        (Method.DFGM, Recovery.LAST),
        (Method.DFGM, Recovery.AVERAGE),
    )
    epsilon_in: float | None = None  # None: theory schedule
    max_outer: int = 20_000
    wall_time: bool = True
    workers: int = 1


@dataclasses.dataclass
class Row:
    family: str
    n: int
    seed: int
    index: int
    method: str
    recovery: str
    outer_iters: int
    inner_iters: int
    matvecs: int
    wall_ns: int
    final_gap: float
    final_infeas: float
    eps_in: str
    status: str

    def summary(self) -> tuple:
        return tuple(getattr(self, f) for f in SUMMARY_FIELDS)


def _run(inst: Instance, cfg: SolverConfig, recovery: Recovery, eps_in_label: str, wall: bool) -> Row:
    t0 = time.perf_counter_ns()
    rep: SolveReport = solve(inst.prob, cfg)
    wall_ns = time.perf_counter_ns() - t0 if wall else 0
    if recovery is Recovery.LAST:
        f, infeas = rep.primal_obj_last, rep.infeas_last
    else:
        f, infeas = rep.primal_obj_avg, rep.infeas_avg
    return Row(
        family=inst.family.value,
        n=inst.n,
        seed=inst.seed,
        index=inst.index,
        method=cfg.method.value,
        recovery=recovery.value,
        outer_iters=rep.outer_iters,
        inner_iters=rep.total_inner_iters,
        matvecs=rep.total_matvecs,
        wall_ns=wall_ns,
        final_gap=abs(f - inst.ref.f_star),
        final_infeas=infeas,
        eps_in=eps_in_label,
        status=rep.status.value,
    )


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _instances(spec: BenchSpec) -> list[tuple[Family, int, int, int]]:
    return [(spec.family, n, spec.seed, i) for n in spec.n_list for i in range(spec.instances_per_n)]


def _sort(rows: list[Row]) -> list[Row]:
    return sorted(rows, key=lambda r: (r.n, r.index, r.method, r.recovery, r.eps_in))


def _sensitivity_job(args) -> list[Row]:
    (family, n, seed, index), spec, cap = args
    inst = make_instance(family, n, seed, index)
    rows = []
    for method in (Method.DGM, Method.DFGM):
        for eps_in in (*SENSITIVITY_EPS_IN, None):
            cfg = SolverConfig(
                epsilon=spec.epsilon,
                method=method,
                epsilon_in=eps_in,
                recovery=Recovery.AVERAGE,
                dual_radius=inst.dual_radius,
                stop=StopRule.SCHEDULE,
                max_outer=cap,
            )
            label = "theory" if eps_in is None else repr(eps_in)
            rows.append(_run(inst, cfg, Recovery.AVERAGE, label, spec.wall_time))
    return rows


def run_sensitivity(spec: BenchSpec, outer_cap: int = 2000) -> list[Row]:
    """Final |F(u_avg) - F*| after the theory outer budget (capped) for each inner accuracy."""
    jobs = [(key, spec, outer_cap) for key in _instances(spec)]
    return _sort([r for rows in _map(_sensitivity_job, jobs, spec.workers) for r in rows])


def sensitivity_spread(rows: Sequence[Row]) -> dict[tuple[int, int], dict[str, float]]:
    """Per instance and method: variance of the final gap across the fixed inner accuracies."""
    fixed = {repr(e) for e in SENSITIVITY_EPS_IN}
    groups: dict[tuple[int, int], dict[str, list[float]]] = {}
    for r in rows:
        if r.eps_in in fixed:
            groups.setdefault((r.n, r.index), {}).setdefault(r.method, []).append(r.final_gap)
    return {k: {m: float(np.var(v)) for m, v in d.items()} for k, d in groups.items()}


def _eq_job(args) -> list[Row]:
    (family, n, seed, index), spec = args
    inst = make_instance(family, n, seed, index)
    variants = [(Method.DGM, spec.epsilon), (Method.DFGM, 1e-3), (Method.DFGM, None)]
    rows = []
    for method, eps_in in variants:
        cfg = SolverConfig(
            epsilon=spec.epsilon,
            method=method,
            epsilon_in=eps_in,
            recovery=Recovery.AVERAGE,
            dual_radius=inst.dual_radius,
            stop=StopRule.ORACLE,
            f_star=inst.ref.f_star,
            stop_at_k_out=False,
            max_outer=spec.max_outer,
        )
        label = "theory" if eps_in is None else repr(eps_in)
        rows.append(_run(inst, cfg, Recovery.AVERAGE, label, spec.wall_time))
    return rows


def run_eq_timing(spec: BenchSpec) -> list[Row]:
    """Equality-constrained PSD instances, averaged iterate, stop on |F - F*| and infeasibility."""
    jobs = [(key, spec) for key in _instances(spec)]
    return _sort([r for rows in _map(_eq_job, jobs, spec.workers) for r in rows])


def _lva_job(args) -> list[Row]:
    (family, n, seed, index), spec = args
    inst = make_instance(family, n, seed, index)
    rows = []
    for method, recovery in spec.methods:
        cfg = SolverConfig(
            epsilon=spec.epsilon,
            method=method,
            epsilon_in=spec.epsilon_in,
            recovery=recovery,
            dual_radius=inst.dual_radius,
            stop=StopRule.ORACLE,
            f_star=inst.ref.f_star,
            stop_at_k_out=False,
            max_outer=spec.max_outer,
        )
        label = "theory" if spec.epsilon_in is None else repr(spec.epsilon_in)
        rows.append(_run(inst, cfg, recovery, label, spec.wall_time))
    return rows


def run_last_vs_average(spec: BenchSpec) -> list[Row]:
    """Outer iterations to reach the accuracy for the last and the averaged primal iterate."""
    jobs = [(key, spec) for key in _instances(spec)]
    return _sort([r for rows in _map(_lva_job, jobs, spec.workers) for r in rows])


def write_summary(path: str | Path, rows: Sequence[Row]) -> None:
    write_rows(path, SUMMARY_FIELDS, (r.summary() for r in rows))
