"""Projected (fast) gradient method on a box, used for the Lagrangian subproblems.

One step reads

    x_k     = clip(y_k - grad(y_k) / L, lb, ub)
    y_{k+1} = x_k + beta_k * (x_k - x_{k-1})

with ``beta_k`` from one of three momentum rules.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

GradFn = Callable[[np.ndarray], np.ndarray]

HARD_CAP = 1_000_000


class InnerFailure(RuntimeError):
    pass


class MomentumKind(enum.Enum):
    GM = "gm"
    FGM = "fgm"
    FGM_SIGMA = "fgm_sigma"


def theta_next(theta: float) -> float:
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))


class Momentum:
    """Stateful ``beta_k`` generator; ``next_beta()`` yields beta_1, beta_2, ..."""

    def __init__(self, kind: MomentumKind, L: float = 1.0, sigma: float = 0.0):
        if kind is MomentumKind.FGM_SIGMA and sigma <= 0.0:
            raise ValueError("FGM_sigma needs a positive strong convexity constant")
        self.kind = kind
        self.theta = 1.0
        self._const = 0.0
        if kind is MomentumKind.FGM_SIGMA:
            sl, ss = math.sqrt(L), math.sqrt(min(sigma, L))
            self._const = (sl - ss) / (sl + ss)

    def next_beta(self) -> float:
        if self.kind is MomentumKind.GM:
            return 0.0
        if self.kind is MomentumKind.FGM_SIGMA:
            return self._const
        nxt = theta_next(self.theta)
        beta = (self.theta - 1.0) / nxt
        self.theta = nxt
        return beta


@dataclasses.dataclass
class InnerState:
    x: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    k: int
    L: float
    sigma: float = 0.0
    grad_map: float = math.inf  # gradient-mapping norm at y_k, certifies x_k

    @classmethod
    def start(cls, x0: np.ndarray, L: float, sigma: float = 0.0) -> "InnerState":
        return cls(x=x0, x_prev=x0, y=x0, k=0, L=L, sigma=sigma)


def fom_step(state: InnerState, rule: Momentum, grad_fn: GradFn, lb: np.ndarray, ub: np.ndarray) -> InnerState:
    if state.L <= 0.0:
        raise ValueError("Lipschitz constant must be positive")
    grad = grad_fn(state.y)
    if not math.isfinite(float(grad.sum())):  # cheaper than np.isfinite(...).all() in the hot loop
        raise InnerFailure("non-finite gradient")
    x = np.minimum(np.maximum(state.y - grad / state.L, lb), ub)
    d = state.y - x
    state.grad_map = state.L * math.sqrt(float(d @ d))
    beta = rule.next_beta()
    state.x_prev, state.x = state.x, x
    state.y = x + beta * (x - state.x_prev) if beta else x
    state.k += 1
    return state


def gradient_map_norm(x: np.ndarray, grad_fn: GradFn, L: float, lb: np.ndarray, ub: np.ndarray) -> float:
    if L <= 0.0:
        raise ValueError("Lipschitz constant must be positive")
    return L * float(np.linalg.norm(x - np.clip(x - grad_fn(x) / L, lb, ub)))


class StopMode(enum.Enum):
    FIXED = "fixed"
    GRADIENT_MAP = "gradient_map"


@dataclasses.dataclass(frozen=True)
class InnerStopPolicy:
    mode: StopMode
    epsilon_in: float
    k_in: int | None = None

    def threshold(self, sigma: float) -> float:
        return math.sqrt(2.0 * sigma * self.epsilon_in)


@dataclasses.dataclass
class InnerResult:
    u: np.ndarray
    iters: int
    converged: bool
    grad_map: float


def fixed_count(L: float, diameter: float, epsilon_in: float) -> int:
    """Fast-gradient iterations that reach ``epsilon_in`` without strong convexity."""
    return max(1, math.ceil(math.sqrt(2.0 * L * diameter**2 / epsilon_in)))


def iteration_cap(L: float, diameter: float, epsilon_in: float) -> int:
    if not math.isfinite(diameter):
        return HARD_CAP
    return min(50 * fixed_count(L, diameter, epsilon_in), HARD_CAP)


def default_momentum(L: float, sigma: float) -> MomentumKind:
    return MomentumKind.FGM_SIGMA if sigma > 1e-7 * max(1.0, L) else MomentumKind.FGM


def solve_inner(
    grad_fn: GradFn,
    x0: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    L: float,
    sigma: float,
    stop: InnerStopPolicy,
    kind: MomentumKind,
    cap: int | None = None,
) -> InnerResult:
    """Run FOM from ``x0`` until the stop policy is met.

    Under ``GRADIENT_MAP`` the returned point ``x_k`` satisfies
    ``phi(x_k) - phi* <= ||g(y_k)||^2 / (2 sigma) <= epsilon_in``, where
    ``g(y_k)`` is the gradient mapping computed inside the step (no extra
    gradient evaluation). The iteration count equals the number of gradient
    evaluations.
    """
    rule = Momentum(kind, L, sigma)
    state = InnerState.start(np.clip(x0, lb, ub), L, sigma)
    if stop.mode is StopMode.FIXED:
        if stop.k_in is None:
            raise ValueError("fixed-count policy needs k_in")
        for _ in range(stop.k_in):
            fom_step(state, rule, grad_fn, lb, ub)
        return InnerResult(state.x, state.k, True, state.grad_map)
    if sigma <= 0.0:
        raise ValueError("gradient-map stopping needs sigma > 0")
    tau = stop.threshold(sigma)
    cap = HARD_CAP if cap is None else cap
    # same arithmetic as fom_step, unrolled: this loop dominates the run time
    x = y = state.x
    k = 0
    gmap = math.inf
    while k < cap:
        grad = grad_fn(y)
        if not math.isfinite(float(grad.sum())):
            raise InnerFailure("non-finite gradient")
        x_new = np.minimum(np.maximum(y - grad / L, lb), ub)
        d = y - x_new
        gmap = L * math.sqrt(float(d @ d))
        beta = rule.next_beta()
        y = x_new + beta * (x_new - x) if beta else x_new
        x = x_new
        k += 1
        if gmap <= tau:
            return InnerResult(x, k, True, gmap)
    logger.warning("inner solve hit its cap of %d iterations (||g||=%.3e > %.3e)", cap, gmap, tau)
    return InnerResult(x, k, False, gmap)
