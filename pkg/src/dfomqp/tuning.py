"""Theory-driven parameters: penalty choice, Lipschitz constants, accuracy schedules."""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .linalg import SAFETY, inflate, sym_eig_extremes
from .model import ProblemConstants, QpProblem

_EPS = np.finfo(float).eps
SIGMA_FLOOR = 1e-12  # relative to L_L; below this sigma is indistinguishable from roundoff


class Method(enum.Enum):
    DGM = "dgm"
    DFGM = "dfgm"


class Case(enum.Enum):
    ORDINARY = "ordinary"  # Q positive definite, rho = 0
    AUGMENTED = "augmented"  # Q only semidefinite, rho > 0


def _ceil(x: float) -> int:
    # integral values perturbed by roundoff must not jump to the next count
    r = round(x)
    return r if abs(x - r) <= 1e-12 * abs(x) else math.ceil(x)


def pd_threshold(lam_max: float) -> float:
    return 1e-7 * max(1.0, lam_max)


def select_case(prob: QpProblem) -> Case:
    lam_min, lam_max = prob.spectrum
    return Case.ORDINARY if lam_min > pd_threshold(lam_max) else Case.AUGMENTED


def rho_star(dual_radius: float, epsilon: float) -> float:
    """Penalty minimizing the predicted total inner-iteration count."""
    if epsilon <= 0.0 or dual_radius <= 0.0:
        raise ValueError("epsilon and dual radius must be positive")
    return 8.0 * dual_radius**2 / epsilon


def _deflate(lam_min: float, lam_max: float) -> float:
    # eigvalsh backward error is a small multiple of eps * |lambda_max|
    return max(lam_min * (1.0 - SAFETY) - 64.0 * _EPS * abs(lam_max), 0.0)


def dual_lipschitz(prob: QpProblem, rho: float) -> float:
    """``||G||^2 / (lambda_min(Q) + rho ||G||^2)``, biased upward."""
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    a = inflate(prob.norm_G) ** 2
    if a == 0.0:
        return 0.0
    lam_min, lam_max = prob.spectrum
    b = _deflate(lam_min, lam_max) + rho * a
    if b <= 0.0:
        raise ValueError("dual is not smooth: Q is singular and rho = 0; use rho > 0")
    return a / b


def problem_constants(prob: QpProblem, rho: float) -> ProblemConstants:
    lam_min, lam_max = prob.spectrum
    norm_g = inflate(prob.norm_G)
    L_L = inflate(lam_max) + rho * norm_g**2
    if rho > 0.0 and prob.p and prob.all_zero:
        H = prob.Q + rho * (prob.G.T @ prob.G)
        h_min, h_max = sym_eig_extremes(0.5 * (H + H.T))
        sigma = _deflate(h_min, h_max)
    else:
        # with inequality rows the penalty term is not globally strongly convex
        sigma = _deflate(lam_min, lam_max)
    if sigma <= SIGMA_FLOOR * L_L:
        sigma = 0.0
    L_d = dual_lipschitz(prob, rho) if prob.p else 0.0
    return ProblemConstants(
        rho=rho,
        norm_G=norm_g,
        lam_min_Q=lam_min,
        lam_max_Q=lam_max,
        L_L=max(L_L, np.finfo(float).tiny),
        sigma_L=sigma,
        L_d=L_d,
    )


@dataclasses.dataclass(frozen=True)
class Schedule:
    epsilon: float
    epsilon_in: float
    k_out: int
    rho: float
    k_in_estimate: int | None
    k_total_estimate: int | None
    method: Method
    case: Case
    dual_radius: float
    L_d: float
    rho_is_theory: bool = True
    approximate: bool = False


def outer_accuracy(method: Method, epsilon: float, L_d: float, dual_radius: float) -> tuple[float, int]:
    """``(epsilon_in, k_out)`` so that the inexact dual rate reaches ``epsilon``."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    base = 8.0 * L_d * dual_radius**2 / epsilon
    if method is Method.DGM:
        return epsilon / 4.0, max(1, _ceil(base))
    k_out = max(1, _ceil(math.sqrt(base)))
    if L_d * dual_radius == 0.0:
        return epsilon / 8.0, k_out
    eps_in = epsilon * math.sqrt(epsilon) / (8.0 * dual_radius * math.sqrt(2.0 * L_d))
    # small ceilinged k_out can leave less room for the inner-error term than the formula assumes
    slack = (epsilon - 4.0 * L_d * dual_radius**2 / (k_out + 1) ** 2) / (2.0 * (k_out + 1))
    return min(eps_in, slack), k_out


def inner_iterations(L_L: float, sigma_L: float, diameter: float, epsilon_in: float) -> int | None:
    """A-priori inner iteration count for one epsilon_in-accurate inner solve."""
    if sigma_L == 0.0:
        if not math.isfinite(diameter):
            raise ValueError("inner complexity needs a bounded box when the inner problem is not strongly convex")
        return max(1, _ceil(math.sqrt(2.0 * L_L * diameter**2 / epsilon_in)))
    if not math.isfinite(diameter):
        return None
    ratio = L_L * diameter**2 / epsilon_in
    log_term = math.log(ratio) if ratio > 1.0 else 0.0
    return max(1, _ceil(math.sqrt(L_L / sigma_L) * log_term + 1.0))


def total_iterations(norm_G: float, sigma_L: float, diameter: float, dual_radius: float, epsilon: float) -> int | None:
    if not math.isfinite(diameter):
        return None
    if sigma_L == 0.0:
        return math.floor(24.0 * norm_G * diameter * dual_radius / epsilon)
    arg = 8.0 * norm_G * diameter * dual_radius / epsilon
    if arg <= 1.0:
        return 0
    return math.floor(16.0 * norm_G * dual_radius / math.sqrt(sigma_L * epsilon) * math.log(arg))


def schedule(
    prob: QpProblem,
    constants: ProblemConstants,
    method: Method,
    epsilon: float,
    dual_radius: float,
    case: Case | None = None,
    rho_is_theory: bool = True,
) -> Schedule:
    case = case or (Case.AUGMENTED if constants.rho > 0.0 else Case.ORDINARY)
    eps_in, k_out = outer_accuracy(method, epsilon, constants.L_d, dual_radius)
    diameter = prob.box_diameter
    k_in = inner_iterations(constants.L_L, constants.sigma_L, diameter, eps_in)
    k_total = total_iterations(constants.norm_G, constants.sigma_L, diameter, dual_radius, epsilon)
    approximate = (
        constants.lam_max_Q < constants.norm_G**2 or dual_radius <= 1.0 or epsilon >= 1.0 or not rho_is_theory
    )
    return Schedule(
        epsilon=epsilon,
        epsilon_in=eps_in,
        k_out=k_out,
        rho=constants.rho,
        k_in_estimate=k_in,
        k_total_estimate=k_total,
        method=method,
        case=case,
        dual_radius=dual_radius,
        L_d=constants.L_d,
        rho_is_theory=rho_is_theory,
        approximate=approximate,
    )


def dual_rate_bound(k: int, method: Method, L_d: float, dual_radius: float, epsilon_in: float) -> float:
    """Bound on ``F* - d(lambda^k)`` for the inexact dual method."""
    p = 1 if method is Method.DGM else 2
    return 4.0 * L_d * dual_radius**2 / (k + 1) ** p + 2.0 * (k + 1) ** (p - 1) * epsilon_in
