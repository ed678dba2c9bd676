"""Computable convergence bounds for the inexact dual methods.

All functions take the dual Lipschitz constant ``L_d``, the dual radius
``R_d`` (distance from the initial multiplier to the dual optimal set), the
outer accuracy ``eps`` and the inner accuracy ``eps_in``.
"""

from __future__ import annotations

import math

from .tuning import Method, dual_rate_bound

__all__ = [
    "dual_rate_bound",
    "average_infeasibility_bound",
    "multiplier_drift_bound",
    "last_iterate_bounds",
    "average_suboptimality_bounds",
]


def average_infeasibility_bound(k: int, method: Method, L_d: float, R_d: float, eps_in: float) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if method is Method.DGM:
        return 4.0 * L_d * R_d / k + 2.0 * math.sqrt(L_d * eps_in / k)
    return 8.0 * L_d * R_d / (k + 1) ** 2 + 8.0 * math.sqrt(L_d * eps_in / (k + 1))


def multiplier_drift_bound(k: int, L_d: float, R_d: float, eps_in: float) -> float:
    """Bound on ``||lambda^k - lambda*||``."""
    if eps_in == 0.0:
        return R_d
    return R_d + math.sqrt(k * eps_in / L_d)


def _last_core(L_d: float, R_d: float, eps: float) -> float:
    a = math.sqrt(L_d * eps) / math.sqrt(2.0)
    b = L_d**0.25 * eps**0.75 / math.sqrt(3.0 * R_d) if R_d > 0.0 else 0.0
    return max(a, b)


def last_iterate_bounds(L_d: float, R_d: float, eps: float, eps_in: float) -> tuple[float, float]:
    """``(infeasibility, |F - F*|)`` bounds for the last primal iterate at ``k_out``."""
    core = _last_core(L_d, R_d, eps)
    tail = math.sqrt(2.0 * L_d * eps)
    feas = core + tail
    subopt = 4.0 * R_d * core + 4.0 * R_d * tail + eps_in
    return feas, subopt


def average_suboptimality_bounds(method: Method, eps: float) -> tuple[float, float, float]:
    """``(infeasibility * R_d, lower, upper)`` guarantees for the averaged iterate at ``k_out``.

    Infeasibility is at most the first value divided by ``R_d``; ``F - F*``
    lies in ``[lower, upper]``.
    """
    if method is Method.DGM:
        return eps, -eps, eps / 4.0
    return 3.0 * eps, -3.0 * eps, 1.25 * eps
