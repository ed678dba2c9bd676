"""Reference solvers: exhaustive active-set enumeration and an interior-point cross-check.

Sign convention: ``Qu + q + G'lam + nu_ub - nu_lb = 0`` with ``lam >= 0`` on
inequality rows, ``lam`` free on equality rows and ``nu >= 0``.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .model import InfeasibleSpecError, QpProblem, dist_cone

logger = logging.getLogger(__name__)

MAX_N = 12
MAX_P = 10
CHUNK = 8192


class OracleInfeasible(InfeasibleSpecError):
    """No assignment produced a verified KKT point."""


@dataclasses.dataclass
class OracleSolution:
    u_star: np.ndarray
    lambda_star: np.ndarray
    box_multipliers: np.ndarray  # nu_ub - nu_lb
    f_star: float
    active_set: int  # bits 0..2n-1: lower/upper faces, then one bit per inequality row
    kkt_residual: float
    multipliers_unique: bool


def oracle_dual_radius(sol: OracleSolution, lambda0: np.ndarray | None = None) -> float:
    lam0 = np.zeros_like(sol.lambda_star) if lambda0 is None else np.asarray(lambda0, dtype=float)
    return float(np.linalg.norm(sol.lambda_star - lam0))


def _tolerance(prob: QpProblem) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(prob.q)) + float(np.linalg.norm(prob.g)))


def _build(prob: QpProblem, box_state: np.ndarray, row_active: np.ndarray):
    """Batched full KKT systems; box_state in {0 free, 1 lower, 2 upper}."""
    n, p = prob.n, prob.p
    m = box_state.shape[0]
    free = box_state == 0
    M = np.zeros((m, n + p, n + p))
    b = np.zeros((m, n + p))
    M[:, :n, :n] = np.where(free[:, :, None], prob.Q[None], np.eye(n)[None])
    M[:, :n, n:] = np.where(free[:, :, None], prob.G.T[None], 0.0)
    bound = np.where(box_state == 1, prob.lb, np.where(box_state == 2, prob.ub, 0.0))
    b[:, :n] = np.where(free, -prob.q, bound)
    M[:, n:, :n] = np.where(row_active[:, :, None], prob.G[None], 0.0)
    M[:, n:, n:] = np.where(row_active[:, :, None], 0.0, np.eye(p)[None])
    b[:, n:] = np.where(row_active, -prob.g, 0.0)
    return M, b


def _solve_batch(M: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve what can be solved; returns (solutions, ok mask). Singular systems are bisected out."""
    try:
        return np.linalg.solve(M, b[..., None])[..., 0], np.ones(M.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        if M.shape[0] == 1:
            return np.zeros_like(b), np.zeros(1, dtype=bool)
        h = M.shape[0] // 2
        z1, ok1 = _solve_batch(M[:h], b[:h])
        z2, ok2 = _solve_batch(M[h:], b[h:])
        return np.concatenate([z1, z2]), np.concatenate([ok1, ok2])


def _decode_box(codes: np.ndarray, n: int) -> np.ndarray:
    out = np.empty((codes.shape[0], n), dtype=np.int8)
    c = codes.copy()
    for i in range(n):
        out[:, i] = c % 3
        c //= 3
    return out


def _check(prob: QpProblem, box_state, row_active, u, lam, tol):
    """Vectorized KKT verification; returns (ok mask, box multipliers)."""
    n = prob.n
    lb, ub = prob.lb, prob.ub
    stat = u @ prob.Q + prob.q + lam @ prob.G  # Q symmetric
    nu = np.where(box_state == 0, 0.0, -stat)  # nu_ub - nu_lb
    in_box = np.all((u >= lb - tol) & (u <= ub + tol), axis=1)
    lower_ok = np.all(np.where(box_state == 1, nu <= tol, True), axis=1)
    upper_ok = np.all(np.where(box_state == 2, nu >= -tol, True), axis=1)
    r = u @ prob.G.T + prob.g
    feas = np.all(np.where(prob.nonpos, r <= tol, np.abs(r) <= tol), axis=1)
    sign = np.all(np.where(prob.nonpos, lam >= -tol, True), axis=1)
    finite = np.all(np.isfinite(u), axis=1) & np.all(np.isfinite(lam), axis=1)
    stat_ok = np.all(np.where(box_state == 0, np.abs(stat) <= tol, True), axis=1) if n else np.ones(len(u), bool)
    return finite & in_box & lower_ok & upper_ok & feas & sign & stat_ok, nu


def _licq(prob: QpProblem, u: np.ndarray) -> bool:
    """Independent gradients of every constraint tight at ``u``, so the multipliers are unique."""
    tol = _tolerance(prob)
    r = prob.residual(u)
    tight = ~prob.nonpos | (np.abs(r) <= tol)
    at_bound = (np.abs(u - prob.lb) <= tol) | (np.abs(u - prob.ub) <= tol)
    A = np.vstack([prob.G[tight], np.eye(prob.n)[at_bound]])
    return A.shape[0] == 0 or np.linalg.matrix_rank(A) == A.shape[0]


def oracle_solve(prob: QpProblem, chunk: int = CHUNK) -> OracleSolution:
    """Enumerate every box/row activity pattern and keep the best verified KKT point."""
    n, p = prob.n, prob.p
    if n > MAX_N or p > MAX_P:
        raise ValueError(f"oracle limited to n <= {MAX_N}, p <= {MAX_P}")
    tol = _tolerance(prob)
    ineq = np.flatnonzero(prob.nonpos)
    m_ineq = ineq.size
    row_states = np.zeros((2**m_ineq, p), dtype=bool)
    row_states[:, ~prob.nonpos] = True
    for j, idx in enumerate(ineq):
        row_states[:, idx] = (np.arange(2**m_ineq) >> j) & 1
    n_active = row_states.sum(axis=1)
    finite_lb, finite_ub = np.isfinite(prob.lb), np.isfinite(prob.ub)
    best = None
    total = 3**n
    for start in range(0, total, chunk):
        boxes = _decode_box(np.arange(start, min(start + chunk, total), dtype=np.int64), n)
        valid = np.all(((boxes != 1) | finite_lb) & ((boxes != 2) | finite_ub), axis=1)
        boxes = boxes[valid]
        if not boxes.size and n:
            continue
        n_free = (boxes == 0).sum(axis=1)
        bi, ri = np.nonzero(n_active[None, :] <= n_free[:, None])  # more active rows than free coords is singular
        if not bi.size:
            continue
        bs, rs = boxes[bi], row_states[ri]
        M, b = _build(prob, bs, rs)
        z, ok = _solve_batch(M, b)
        if not ok.all():
            logger.debug("skipped %d singular KKT systems", int((~ok).sum()))
        u, lam = z[:, :n], z[:, n:]
        good, nu = _check(prob, bs, rs, u, lam, tol)
        good &= ok
        for idx in np.flatnonzero(good):
            cand = _candidate(prob, bs[idx], rs[idx], np.clip(u[idx], prob.lb, prob.ub), lam[idx], nu[idx])
            if best is None or _better(cand, best):
                best = cand
    if best is None:
        raise OracleInfeasible("no feasible KKT point found")
    return best


def _active_bits(prob: QpProblem, box_state, row_active) -> int:
    bits = 0
    for i, s in enumerate(box_state):
        if s == 1:
            bits |= 1 << i
        elif s == 2:
            bits |= 1 << (prob.n + i)
    for k, idx in enumerate(np.flatnonzero(prob.nonpos)):
        if row_active[idx]:
            bits |= 1 << (2 * prob.n + k)
    return bits


def _candidate(prob: QpProblem, box_state, row_active, u, lam, nu) -> OracleSolution:
    resid = prob.Q @ u + prob.q + prob.G.T @ lam + nu
    return OracleSolution(
        u_star=u,
        lambda_star=lam,
        box_multipliers=nu,
        f_star=prob.objective(u),
        active_set=_active_bits(prob, box_state, row_active),
        kkt_residual=float(np.linalg.norm(resid)),
        multipliers_unique=_licq(prob, u),
    )


def _better(a: OracleSolution, b: OracleSolution) -> bool:
    scale = 1e-12 * (1.0 + abs(b.f_star))
    if a.f_star < b.f_star - scale:
        return True
    if a.f_star > b.f_star + scale:
        return False
    na, nb = float(np.linalg.norm(a.u_star)), float(np.linalg.norm(b.u_star))
    if na != nb:
        return na < nb
    return a.active_set < b.active_set


def reference_solve(prob: QpProblem) -> OracleSolution:
    """Interior-point solve with an active-set polish; for instances beyond enumeration size."""
    import cvxopt
    from cvxopt import solvers

    n = prob.n
    eq = ~prob.nonpos
    fin_lb, fin_ub = np.isfinite(prob.lb), np.isfinite(prob.ub)
    G_in = np.vstack([prob.G[prob.nonpos], np.eye(n)[fin_ub], -np.eye(n)[fin_lb]])
    h_in = np.concatenate([-prob.g[prob.nonpos], prob.ub[fin_ub], -prob.lb[fin_lb]])
    args = [cvxopt.matrix(prob.Q), cvxopt.matrix(prob.q)]
    kwargs = {}
    if G_in.shape[0]:
        kwargs.update(G=cvxopt.matrix(G_in), h=cvxopt.matrix(h_in))
    if eq.any():
        kwargs.update(A=cvxopt.matrix(prob.G[eq]), b=cvxopt.matrix(-prob.g[eq]))
    opts = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12, "maxiters": 200}
    res = solvers.qp(*args, options=opts, **kwargs)
    if res["status"] not in ("optimal", "unknown") or res["x"] is None:
        raise OracleInfeasible(f"interior-point solve failed: {res['status']}")
    u = np.array(res["x"]).reshape(-1)
    lam = np.zeros(prob.p)
    z = np.array(res["z"]).reshape(-1) if G_in.shape[0] else np.zeros(0)
    m = int(prob.nonpos.sum())
    lam[prob.nonpos] = z[:m]
    if eq.any():
        lam[eq] = np.array(res["y"]).reshape(-1)
    zu = z[m : m + int(fin_ub.sum())]
    zl = z[m + int(fin_ub.sum()) :]
    nu = np.zeros(n)
    nu[fin_ub] += zu
    nu[fin_lb] -= zl
    polished = _polish(prob, u, lam, nu)
    if polished is not None:
        return polished
    return OracleSolution(
        u_star=u,
        lambda_star=lam,
        box_multipliers=nu,
        f_star=prob.objective(u),
        active_set=0,
        kkt_residual=float(np.linalg.norm(prob.Q @ u + prob.q + prob.G.T @ lam + nu)),
        multipliers_unique=False,
    )


def _polish(prob: QpProblem, u, lam, nu) -> OracleSolution | None:
    """Re-solve the KKT system on the active set guessed from the interior-point output."""
    tol = 1e-6 * (1.0 + float(np.abs(u).max(initial=0.0)))
    box_state = np.zeros(prob.n, dtype=np.int8)
    box_state[(u - prob.lb <= tol) & (nu < 0)] = 1
    box_state[(prob.ub - u <= tol) & (nu > 0)] = 2
    r = prob.residual(u)
    row_active = ~prob.nonpos | (r >= -tol)
    M, b = _build(prob, box_state[None], row_active[None])
    sol, *_ = np.linalg.lstsq(M[0], b[0], rcond=None)
    u2, lam2 = sol[: prob.n], sol[prob.n :]
    good, nu2 = _check(prob, box_state[None], row_active[None], u2[None], lam2[None], _tolerance(prob))
    if not good[0]:
        return None
    return _candidate(prob, box_state, row_active, np.clip(u2, prob.lb, prob.ub), lam2, nu2[0])


def is_primal_feasible(prob: QpProblem, u: np.ndarray, tol: float = 1e-10) -> bool:
    return dist_cone(prob.residual(u), prob.nonpos) <= tol and bool(np.all(u >= prob.lb) and np.all(u <= prob.ub))
