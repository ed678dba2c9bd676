"""Inexact (augmented) dual gradient and fast gradient methods with primal recovery."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from typing import Callable

import numpy as np

from . import bounds
from .inner import (
    InnerFailure,
    InnerStopPolicy,
    MomentumKind,
    StopMode,
    default_momentum,
    fixed_count,
    iteration_cap,
    solve_inner,
    theta_next,
)
from .linalg import MatvecCounter, matvec
from .model import (
    ProblemConstants,
    QpProblem,
    dist_cone,
    lagrangian_from_parts,
    slack_from_residual,
)
from .tuning import Case, Method, Schedule, problem_constants, rho_star, schedule, select_case

logger = logging.getLogger(__name__)


class Recovery(enum.Enum):
    LAST = "last"
    AVERAGE = "average"


class StopRule(enum.Enum):
    GAP = "gap"  # primal-dual gap surrogate, needs no reference value
    ORACLE = "oracle"  # |F - F*| against a known optimal value
    SCHEDULE = "schedule"  # run until k_out or the cap


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    INNER_FAILURE = "inner_failure"


@dataclasses.dataclass
class SolverConfig:
    """Solver options.

    ``dual_radius`` is an estimate of the distance from ``lambda0`` to the
    optimal multipliers. It drives the penalty, ``k_out`` and ``epsilon_in``;
    the convergence guarantees only hold when it is not an underestimate.
    """

    epsilon: float = 1e-3
    method: Method = Method.DFGM
    rho: float | None = None
    epsilon_in: float | None = None
    recovery: Recovery = Recovery.LAST
    max_outer: int | None = 100_000
    dual_radius: float = 1.0
    momentum: MomentumKind | None = None
    inner_stop: StopMode | None = None
    stop: StopRule = StopRule.GAP
    f_star: float | None = None
    stop_at_k_out: bool = True
    redefine_dgm: bool = True
    track_last: bool = False
    lambda0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.rho is not None and self.rho < 0.0:
            raise ValueError("rho must be nonnegative")
        if self.stop is StopRule.ORACLE and self.f_star is None:
            raise ValueError("oracle stopping needs f_star")


def project_dual(v: np.ndarray, nonneg: np.ndarray) -> np.ndarray:
    return np.where(nonneg, np.maximum(v, 0.0), v)


def dual_cone_mask(prob: QpProblem, rho: float) -> np.ndarray:
    """Rows whose multiplier is sign-constrained: inequalities of the ordinary dual."""
    if rho > 0.0:
        return np.zeros(prob.p, dtype=bool)
    return prob.nonpos.copy()


def inexact_dual_gradient(u_bar: np.ndarray, mu: np.ndarray, prob: QpProblem, rho: float) -> np.ndarray:
    r = prob.residual(u_bar)
    return r - slack_from_residual(r, mu, prob.nonpos, rho)


def dual_update(
    mu: np.ndarray,
    lam_prev: np.ndarray,
    grad: np.ndarray,
    L_d: float,
    nonneg: np.ndarray,
    method: Method,
    theta: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """One projected ascent step plus momentum.

    Returns ``(lambda_k, mu_{k+1}, theta_{k+1})``; ``theta`` stays 1 for DGM.
    """
    if L_d > 0.0:
        lam = project_dual(mu + grad / (2.0 * L_d), nonneg)
    else:
        lam = mu.copy()
    if not np.all(np.isfinite(lam)):
        raise FloatingPointError("non-finite multiplier")
    if method is Method.DGM:
        return lam, lam, 1.0
    nxt = theta_next(theta)
    beta = (theta - 1.0) / nxt
    return lam, lam + beta * (lam - lam_prev), nxt


@dataclasses.dataclass
class OracleResult:
    mu: np.ndarray
    u: np.ndarray
    Qu: np.ndarray
    Gu: np.ndarray
    grad: np.ndarray
    value: float
    objective: float
    infeasibility: float
    inner_iters: int
    converged: bool


class DualOracle:
    """Approximate dual value and gradient via an inner solve at a multiplier.

    Every inner step costs ``matvecs_per_inner`` counted products and every
    call adds ``matvecs_per_call`` more, so the counter always equals
    ``inner_iters * matvecs_per_inner + calls * matvecs_per_call``.
    """

    def __init__(
        self,
        prob: QpProblem,
        constants: ProblemConstants,
        epsilon_in: float,
        momentum: MomentumKind | None = None,
        inner_stop: StopMode | None = None,
        counter: MatvecCounter | None = None,
    ):
        self.prob = prob
        self.rho = constants.rho
        self.constants = constants
        self.epsilon_in = epsilon_in
        self.counter = counter if counter is not None else MatvecCounter()
        L, sigma = constants.L_L, constants.sigma_L
        self.momentum = momentum or default_momentum(L, sigma)
        mode = inner_stop or (StopMode.GRADIENT_MAP if sigma > 0.0 else StopMode.FIXED)
        if mode is StopMode.GRADIENT_MAP and sigma <= 0.0:
            raise ValueError("gradient-map stopping needs a strongly convex inner problem")
        k_in = None
        if mode is StopMode.FIXED:
            k_in = fixed_count(L, prob.box_diameter, epsilon_in)
            if self.momentum is MomentumKind.GM:
                k_in = max(1, math.ceil(2.0 * L * prob.box_diameter**2 / epsilon_in) - 1)
        self.stop = InnerStopPolicy(mode, epsilon_in, k_in)
        self.cap = iteration_cap(L, prob.box_diameter, epsilon_in)
        self.closed_form = self.rho == 0.0 or prob.all_zero
        G = prob.G
        has_g = G.size > 0
        if self.closed_form:
            self.H = prob.Q + self.rho * (G.T @ G) if self.rho > 0.0 else prob.Q
            self.c0 = prob.q + self.rho * (G.T @ prob.g) if self.rho > 0.0 else prob.q
            self.matvecs_per_inner = 1
            self.matvecs_per_call = 1 + 2 * has_g
        else:
            self.matvecs_per_inner = 3
            self.matvecs_per_call = 2
        self.calls = 0
        self.inner_iters = 0
        self.failures = 0

    def _grad_fn(self, mu: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        prob, counter = self.prob, self.counter
        if self.closed_form:
            H = self.H
            c = self.c0 + matvec(prob.G.T, mu, counter) if prob.G.size else self.c0
            return lambda y: matvec(H, y, counter) + c
        Q, G, GT, q, g, mask, rho = prob.Q, prob.G, prob.G.T, prob.q, prob.g, prob.nonpos, self.rho
        shift = mu / rho

        def grad(y: np.ndarray) -> np.ndarray:
            r = matvec(G, y, counter) + g
            z = r + shift
            excess = np.where(mask, np.maximum(z, 0.0), z)  # z - proj_K(z)
            return matvec(Q, y, counter) + q + matvec(GT, rho * excess, counter)

        return grad

    def evaluate(self, mu: np.ndarray, warm: np.ndarray | None = None) -> OracleResult:
        prob = self.prob
        x0 = np.clip(np.zeros(prob.n) if warm is None else warm, prob.lb, prob.ub)
        c = self.constants
        res = solve_inner(
            self._grad_fn(mu), x0, prob.lb, prob.ub, c.L_L, c.sigma_L, self.stop, self.momentum, self.cap
        )
        u = res.u
        Qu = matvec(prob.Q, u, self.counter)
        Gu = matvec(prob.G, u, self.counter) if prob.G.size else np.zeros(prob.p)
        r = Gu + prob.g
        grad = r - slack_from_residual(r, mu, prob.nonpos, self.rho)
        f = float(0.5 * u @ Qu + prob.q @ u)
        self.calls += 1
        self.inner_iters += res.iters
        if not res.converged:
            self.failures += 1
        return OracleResult(
            mu=mu,
            u=u,
            Qu=Qu,
            Gu=Gu,
            grad=grad,
            value=lagrangian_from_parts(f, r, mu, prob.nonpos, self.rho),
            objective=f,
            infeasibility=dist_cone(r, prob.nonpos),
            inner_iters=res.iters,
            converged=res.converged,
        )


def dual_value(prob: QpProblem, rho: float, lam: np.ndarray, epsilon: float = 1e-12, warm=None) -> OracleResult:
    """High-accuracy evaluation of ``d_rho(lam)`` and its gradient (reference use)."""
    oracle = DualOracle(prob, problem_constants(prob, rho), epsilon)
    return oracle.evaluate(np.asarray(lam, dtype=float), warm)


@dataclasses.dataclass
class IterationRecord:
    k: int
    dual_val: float
    f_last: float
    f_avg: float
    infeas_last: float
    infeas_avg: float
    inner_iters: int
    cum_matvecs: int


TRACE_FIELDS = [f.name for f in dataclasses.fields(IterationRecord)]


@dataclasses.dataclass
class DualState:
    lam: np.ndarray
    lam_prev: np.ndarray
    mu: np.ndarray
    theta: float
    k: int
    u_warm: np.ndarray | None
    avg_num: np.ndarray
    avg_Qu: np.ndarray
    avg_Gu: np.ndarray
    S: float
    lam_sum: np.ndarray


@dataclasses.dataclass
class SolveReport:
    u_last: np.ndarray
    u_avg: np.ndarray
    lambda_final: np.ndarray
    primal_obj_last: float
    primal_obj_avg: float
    infeas_last: float
    infeas_avg: float
    dual_value_estimate: float
    outer_iters: int
    total_inner_iters: int
    total_matvecs: int
    oracle_calls: int
    matvecs_per_inner: int
    matvecs_per_call: int
    status: Status
    stop_reason: str
    schedule: Schedule
    constants: ProblemConstants
    inner_failures: int
    trace: list[IterationRecord]

    def solution(self, recovery: Recovery) -> np.ndarray:
        return self.u_last if recovery is Recovery.LAST else self.u_avg


def recover_average(state: DualState) -> np.ndarray:
    if state.S <= 0.0:
        raise ValueError("no primal iterates yet")
    return state.avg_num / state.S


class DfomSolver:
    """Stateful outer loop; ``step()`` performs one multiplier update."""

    def __init__(self, prob: QpProblem, config: SolverConfig):
        self.prob = prob
        self.config = config
        if config.rho is not None:
            rho = float(config.rho)
            case = Case.AUGMENTED if rho > 0.0 else Case.ORDINARY
            theory = rho == 0.0 and select_case(prob) is Case.ORDINARY
        else:
            case = select_case(prob)
            rho = 0.0 if case is Case.ORDINARY or prob.p == 0 else rho_star(config.dual_radius, config.epsilon)
            theory = True
        self.case = case
        self.constants = problem_constants(prob, rho)
        if case is Case.AUGMENTED and config.rho is not None:
            theory = math.isclose(rho, rho_star(config.dual_radius, config.epsilon), rel_tol=1e-12)
        self.schedule = schedule(prob, self.constants, config.method, config.epsilon, config.dual_radius, case, theory)
        self.epsilon_in = config.epsilon_in if config.epsilon_in is not None else self.schedule.epsilon_in
        self.counter = MatvecCounter()
        self.oracle = DualOracle(prob, self.constants, self.epsilon_in, config.momentum, config.inner_stop, self.counter)
        self.nonneg = dual_cone_mask(prob, rho)
        self.track_last = config.track_last or config.recovery is Recovery.LAST
        p, n = prob.p, prob.n
        lam0 = np.zeros(p) if config.lambda0 is None else project_dual(np.asarray(config.lambda0, float), self.nonneg)
        self.state = DualState(
            lam=lam0,
            lam_prev=lam0,
            mu=lam0,
            theta=1.0,
            k=0,
            u_warm=None,
            avg_num=np.zeros(n),
            avg_Qu=np.zeros(n),
            avg_Gu=np.zeros(p),
            S=0.0,
            lam_sum=lam0.copy(),
        )
        self.trace: list[IterationRecord] = []
        self.last: OracleResult | None = None  # oracle at the current lambda^k, when tracked
        self.current: OracleResult | None = None  # oracle at mu^k
        self._cache: OracleResult | None = None

    def _evaluate(self, mu: np.ndarray, warm: np.ndarray | None) -> OracleResult:
        # DGM evaluates at lambda^k and then at mu^{k+1} = lambda^k; reuse that solve
        c = self._cache
        if c is not None and (c.mu is mu or np.array_equal(c.mu, mu)):
            return c
        out = self.oracle.evaluate(mu, warm)
        self._cache = out
        return out

    @property
    def L_d(self) -> float:
        return self.constants.L_d

    def average_point(self) -> tuple[np.ndarray, float, float]:
        """``(u_avg, F(u_avg), dist_K(G u_avg + g))`` from running sums (no matvecs)."""
        st = self.state
        u = st.avg_num / st.S
        Qu = st.avg_Qu / st.S
        r = st.avg_Gu / st.S + self.prob.g
        return u, float(0.5 * u @ Qu + self.prob.q @ u), dist_cone(r, self.prob.nonpos)

    def step(self) -> IterationRecord:
        st = self.state
        method = self.config.method
        done = self.oracle.inner_iters
        orc = self._evaluate(st.mu, st.u_warm)
        self.current = orc
        st.k += 1
        w = st.theta
        st.avg_num += w * orc.u
        st.avg_Qu += w * orc.Qu
        st.avg_Gu += w * orc.Gu
        st.S += w
        lam, mu_next, theta = dual_update(st.mu, st.lam, orc.grad, self.L_d, self.nonneg, method, st.theta)
        st.lam_prev, st.lam, st.mu, st.theta = st.lam, lam, mu_next, theta
        st.lam_sum += lam
        st.u_warm = orc.u
        _, f_avg, infeas_avg = self.average_point()
        if self.track_last:
            last = self._evaluate(lam, orc.u)
            self.last = last
            f_last, infeas_last, dual_val = last.objective, last.infeasibility, last.value
        else:
            f_last, infeas_last, dual_val = orc.objective, orc.infeasibility, orc.value
        spent = self.oracle.inner_iters - done
        rec = IterationRecord(st.k, dual_val, f_last, f_avg, infeas_last, infeas_avg, spent, self.counter.count)
        self.trace.append(rec)
        return rec

    def criterion_met(self, rec: IterationRecord) -> bool:
        cfg = self.config
        if cfg.stop is StopRule.SCHEDULE:
            return False
        if cfg.recovery is Recovery.LAST:
            f, infeas = rec.f_last, rec.infeas_last
        else:
            f, infeas = rec.f_avg, rec.infeas_avg
        eps = cfg.epsilon
        if infeas > eps:
            return False
        if cfg.stop is StopRule.ORACLE:
            return abs(f - cfg.f_star) <= eps
        return abs(f - rec.dual_val) <= eps * (1.0 + abs(f))

    def dgm_final_point(self) -> np.ndarray:
        """One ascent step from the running dual average (DGM final point)."""
        st = self.state
        lam_hat = st.lam_sum / (st.k + 1)
        orc = self._evaluate(lam_hat, st.u_warm)
        return dual_update(lam_hat, lam_hat, orc.grad, self.L_d, self.nonneg, Method.DGM, 1.0)[0]

    def diagnostics(self) -> dict:
        """Latest trace row merged with the theoretical bound values."""
        k = self.state.k
        eps_in, R_d = self.epsilon_in, self.schedule.dual_radius
        out = dataclasses.asdict(self.trace[-1]) if self.trace else {"k": 0}
        if k >= 1:
            out["avg_infeas_bound"] = bounds.average_infeasibility_bound(k, self.config.method, self.L_d, R_d, eps_in)
            out["dual_rate_bound"] = bounds.dual_rate_bound(k, self.config.method, self.L_d, R_d, eps_in)
            out["drift_bound"] = bounds.multiplier_drift_bound(k, self.L_d, R_d, eps_in) if self.L_d > 0 else R_d
        return out

    def run(self, callback: Callable[["DfomSolver", IterationRecord], None] | None = None) -> SolveReport:
        cfg = self.config
        k_out = self.schedule.k_out if cfg.stop_at_k_out else None
        cap = cfg.max_outer
        status, reason = Status.MAX_ITERATIONS, "max_outer"
        by_criterion = False
        try:
            while True:
                if cap is not None and self.state.k >= cap:
                    status, reason = Status.MAX_ITERATIONS, "max_outer"
                    break
                rec = self.step()
                if callback is not None:
                    callback(self, rec)
                if self.criterion_met(rec):
                    status, reason, by_criterion = Status.CONVERGED, "criterion", True
                    break
                if k_out is not None and self.state.k >= k_out:
                    status, reason = Status.CONVERGED, "k_out"
                    break
            return self._finish(status, reason, by_criterion)
        except (InnerFailure, FloatingPointError) as exc:
            logger.error("solve aborted: %s", exc)
            return self._finish(Status.INNER_FAILURE, str(exc), False, partial=True)

    def _finish(self, status: Status, reason: str, by_criterion: bool, partial: bool = False) -> SolveReport:
        st, cfg, prob = self.state, self.config, self.prob
        lam_final = st.lam
        redefine = (
            cfg.method is Method.DGM
            and cfg.redefine_dgm
            and st.k > 0
            and not partial
            and not (by_criterion and cfg.recovery is Recovery.LAST)
        )
        if redefine:
            lam_final = self.dgm_final_point()
        if partial or st.k == 0:
            u_avg = st.avg_num / st.S if st.S > 0 else prob.clip(np.zeros(prob.n))
            last_u = st.u_warm if st.u_warm is not None else u_avg
            f_avg = prob.objective(u_avg)
            last = None
        else:
            last = self._evaluate(lam_final, st.u_warm)
            u_avg, f_avg, _ = self.average_point()
            last_u = last.u
        infeas_avg = prob.infeasibility(u_avg) if st.S > 0 else math.inf
        return SolveReport(
            u_last=last_u,
            u_avg=u_avg,
            lambda_final=lam_final,
            primal_obj_last=last.objective if last else prob.objective(last_u),
            primal_obj_avg=f_avg,
            infeas_last=last.infeasibility if last else prob.infeasibility(last_u),
            infeas_avg=infeas_avg,
            dual_value_estimate=last.value if last else -math.inf,
            outer_iters=st.k,
            total_inner_iters=self.oracle.inner_iters,
            total_matvecs=self.counter.count,
            oracle_calls=self.oracle.calls,
            matvecs_per_inner=self.oracle.matvecs_per_inner,
            matvecs_per_call=self.oracle.matvecs_per_call,
            status=status,
            stop_reason=reason,
            schedule=self.schedule,
            constants=self.constants,
            inner_failures=self.oracle.failures,
            trace=self.trace,
        )


def solve(prob: QpProblem, config: SolverConfig | None = None, callback=None) -> SolveReport:
    return DfomSolver(prob, config or SolverConfig()).run(callback)


def recover_last(lambda_final: np.ndarray, prob: QpProblem, config: SolverConfig, warm=None) -> np.ndarray:
    """Inner solve at ``lambda_final`` with the accuracy the config implies."""
    solver = DfomSolver(prob, config)
    return solver.oracle.evaluate(np.asarray(lambda_final, dtype=float), warm).u
