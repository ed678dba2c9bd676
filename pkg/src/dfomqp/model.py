"""QP data model, constraint normalization, cone geometry and the (augmented) Lagrangian.

Problems are stored as

    min  0.5 u'Qu + q'u   s.t.  Gu + g in K,  lb <= u <= ub

where each row of ``K`` is either ``{0}`` (equality) or ``R_-`` (inequality).
"""

from __future__ import annotations

import dataclasses
import enum
from functools import cached_property
from typing import Sequence

import numpy as np

from .linalg import as_matrix, spectral_norm, sym_eig_extremes


class InfeasibleSpecError(ValueError):
    """Raised for malformed or contradictory problem data."""


class ConeKind(enum.Enum):
    ZERO = "zero"
    NONPOS = "nonpos"


def _vector(v, size: int, name: str, allow_inf: bool = False) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if a.shape != (size,):
        raise InfeasibleSpecError(f"{name} must have length {size}, got {a.shape[0]}")
    if np.any(np.isnan(a)):
        raise InfeasibleSpecError(f"{name} contains NaN")
    if not allow_inf and not np.all(np.isfinite(a)):
        raise InfeasibleSpecError(f"{name} must be finite")
    a.setflags(write=False)
    return a


def nonpos_mask(cones) -> np.ndarray:
    """Boolean mask of inequality rows from a mask or a ConeKind sequence."""
    if isinstance(cones, np.ndarray) and cones.dtype == bool:
        return cones
    return np.array([c is ConeKind.NONPOS for c in cones], dtype=bool)


@dataclasses.dataclass(frozen=True)
class RawProblem:
    """User-facing form with two-sided rows ``lbA <= G_raw u + g_raw <= ubA``."""

    Q: np.ndarray
    q: np.ndarray
    G_raw: np.ndarray
    g_raw: np.ndarray
    lbA: np.ndarray
    ubA: np.ndarray
    lb: np.ndarray
    ub: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    G: np.ndarray
    g: np.ndarray
    nonpos: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @classmethod
    def from_arrays(cls, Q, q, G=None, g=None, cones=None, lb=None, ub=None) -> "QpProblem":
        q = np.asarray(q, dtype=float).reshape(-1)
        n = q.shape[0]
        if G is None:
            G = np.zeros((0, n))
        G = np.asarray(G, dtype=float)
        if G.ndim == 1:
            G = G.reshape(-1, n) if G.size else np.zeros((0, n))
        p = G.shape[0]
        if g is None:
            g = np.zeros(p)
        if cones is None:
            cones = [ConeKind.NONPOS] * p
        mask = np.array(nonpos_mask(cones), dtype=bool).reshape(-1)
        if mask.shape != (p,):
            raise InfeasibleSpecError(f"need {p} cone tags, got {mask.shape[0]}")
        mask.setflags(write=False)
        lb = np.full(n, -np.inf) if lb is None else lb
        ub = np.full(n, np.inf) if ub is None else ub
        Qm = as_matrix(Q, n, n, "Q")
        fro = np.linalg.norm(Qm)
        if np.linalg.norm(Qm - Qm.T) > 1e-12 * fro:
            raise InfeasibleSpecError("Q is not symmetric")
        Qm = as_matrix(0.5 * (Qm + Qm.T), n, n, "Q")
        lbv = _vector(lb, n, "lb", allow_inf=True)
        ubv = _vector(ub, n, "ub", allow_inf=True)
        if np.any(lbv > ubv):
            raise InfeasibleSpecError("box has lb > ub")
        if np.any(lbv == np.inf) or np.any(ubv == -np.inf):
            raise InfeasibleSpecError("box bounds point the wrong way")
        prob = cls(
            Q=Qm,
            q=_vector(q, n, "q"),
            G=as_matrix(G, p, n, "G"),
            g=_vector(g, p, "g"),
            nonpos=mask,
            lb=lbv,
            ub=ubv,
        )
        lmin, lmax = prob.spectrum
        if lmin < -1e-8 * max(lmax, 1.0):
            raise InfeasibleSpecError(f"Q is not positive semidefinite (lambda_min={lmin:.3e})")
        return prob

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def p(self) -> int:
        return self.g.shape[0]

    @property
    def cones(self) -> list[ConeKind]:
        return [ConeKind.NONPOS if b else ConeKind.ZERO for b in self.nonpos]

    @property
    def all_zero(self) -> bool:
        return not bool(np.any(self.nonpos))

    @cached_property
    def spectrum(self) -> tuple[float, float]:
        """``(lambda_min(Q), lambda_max(Q))``."""
        return sym_eig_extremes(self.Q, psd=True)

    @cached_property
    def norm_G(self) -> float:
        return spectral_norm(self.G) if self.p else 0.0

    @cached_property
    def box_diameter(self) -> float:
        return float(np.linalg.norm(self.ub - self.lb))

    def objective(self, u: np.ndarray, Qu: np.ndarray | None = None) -> float:
        if Qu is None:
            Qu = self.Q @ u
        return float(0.5 * u @ Qu + self.q @ u)

    def residual(self, u: np.ndarray) -> np.ndarray:
        """``Gu + g``."""
        return self.G @ u + self.g

    def infeasibility(self, u: np.ndarray) -> float:
        return dist_cone(self.residual(u), self.nonpos)

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lb, self.ub)

    def to_raw(self) -> RawProblem:
        """Inverse of :func:`ingest` for problems already in internal form."""
        lbA = np.where(self.nonpos, -np.inf, 0.0)
        ubA = np.zeros(self.p)
        return RawProblem(self.Q, self.q, self.G, self.g, lbA, ubA, self.lb, self.ub)


def ingest(raw: RawProblem) -> QpProblem:
    """Normalize two-sided rows into Zero/NonPos rows.

    A row with equal bounds becomes one equality; otherwise each finite side
    becomes one inequality (upper side first).
    """
    q = np.asarray(raw.q, dtype=float).reshape(-1)
    n = q.shape[0]
    G_raw = np.asarray(raw.G_raw, dtype=float).reshape(-1, n) if np.size(raw.G_raw) else np.zeros((0, n))
    p_raw = G_raw.shape[0]
    if np.any(np.isnan(G_raw)):
        raise InfeasibleSpecError("G_raw contains NaN")
    g_raw = _vector(raw.g_raw, p_raw, "g_raw")
    lbA = _vector(raw.lbA, p_raw, "lbA", allow_inf=True)
    ubA = _vector(raw.ubA, p_raw, "ubA", allow_inf=True)
    bad = np.flatnonzero(lbA > ubA)
    if bad.size:
        raise InfeasibleSpecError(f"row {bad[0]}: lbA > ubA")
    rows, offs, mask = [], [], []
    for i in range(p_raw):
        lo, hi = lbA[i], ubA[i]
        if lo == hi:
            if not np.isfinite(hi):
                raise InfeasibleSpecError(f"row {i}: equality with infinite bound")
            rows.append(G_raw[i])
            offs.append(g_raw[i] - hi)
            mask.append(False)
            continue
        if np.isfinite(hi):
            rows.append(G_raw[i])
            offs.append(g_raw[i] - hi)
            mask.append(True)
        if np.isfinite(lo):
            rows.append(-G_raw[i])
            offs.append(-g_raw[i] + lo)
            mask.append(True)
    G = np.array(rows).reshape(-1, n) if rows else np.zeros((0, n))
    return QpProblem.from_arrays(
        raw.Q, q, G, np.array(offs), np.array(mask, dtype=bool), raw.lb, raw.ub
    )


def project_cone(v: np.ndarray, cones) -> np.ndarray:
    mask = nonpos_mask(cones)
    return np.where(mask, np.minimum(v, 0.0), 0.0)


def dist_cone(v: np.ndarray, cones) -> float:
    mask = nonpos_mask(cones)
    return float(np.linalg.norm(np.where(mask, np.maximum(v, 0.0), v)))


def slack_from_residual(r: np.ndarray, lam: np.ndarray, cones, rho: float) -> np.ndarray:
    """Minimizing slack ``s`` for a given residual ``r = Gu + g``."""
    if rho == 0.0:
        return np.zeros_like(r)
    return project_cone(r + lam / rho, cones)


def slack(u: np.ndarray, lam: np.ndarray, prob: QpProblem, rho: float) -> np.ndarray:
    return slack_from_residual(prob.residual(u), lam, prob.nonpos, rho)


def lagrangian_from_parts(f: float, r: np.ndarray, lam: np.ndarray, cones, rho: float) -> float:
    """Lagrangian value from ``F(u)`` and ``r = Gu + g`` (no matvecs)."""
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    if rho == 0.0:
        return f + float(lam @ r)
    d = dist_cone(r + lam / rho, cones)
    return f + 0.5 * rho * d * d - float(lam @ lam) / (2.0 * rho)


def lagrangian_value(u: np.ndarray, lam: np.ndarray, prob: QpProblem, rho: float) -> float:
    return lagrangian_from_parts(prob.objective(u), prob.residual(u), lam, prob.nonpos, rho)


def lagrangian_grad(u: np.ndarray, lam: np.ndarray, prob: QpProblem, rho: float) -> np.ndarray:
    """Gradient in ``u``: ``Qu + q + G'(lam + rho*(r - s))`` with ``r = Gu + g``."""
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    base = prob.Q @ u + prob.q
    if prob.p == 0:
        return base
    if rho == 0.0:
        return base + prob.G.T @ lam
    r = prob.residual(u)
    s = slack_from_residual(r, lam, prob.nonpos, rho)
    return base + prob.G.T @ (lam + rho * (r - s))


@dataclasses.dataclass(frozen=True)
class ProblemConstants:
    """Spectral constants for a fixed penalty ``rho`` (safety margins applied)."""

    rho: float
    norm_G: float
    lam_min_Q: float
    lam_max_Q: float
    L_L: float
    sigma_L: float
    L_d: float
