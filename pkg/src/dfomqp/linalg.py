"""Dense kernel: counted matrix-vector products and spectral constants."""

from __future__ import annotations

import numpy as np

TOL_EIG = 1e-8
SAFETY = 1e-6


class MatvecCounter:
    """Per-solver count of matrix-vector products.

    Each solver instance owns one counter, so concurrent solves never share
    mutable state; totals are aggregated at report time.
    """

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def __repr__(self) -> str:
        return f"MatvecCounter({self.count})"


def as_matrix(a, rows: int | None = None, cols: int | None = None, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite 2-D float array (read-only copy)."""
    m = np.array(a, dtype=float)
    if m.ndim == 1 and rows is not None and cols is not None and m.size == rows * cols:
        m = m.reshape(rows, cols)  # flat row-major entries
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    m.setflags(write=False)
    return m


def matvec(a: np.ndarray, x: np.ndarray, counter: MatvecCounter | None = None) -> np.ndarray:
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {x.shape}")
    if counter is not None and a.size:
        counter.count += 1
    return a @ x


def sym_eig_extremes(s, tol: float = TOL_EIG, psd: bool = False) -> tuple[float, float]:
    """Return ``(lambda_min, lambda_max)`` of the symmetrized ``s``.

    Uses LAPACK's symmetric eigensolver; this runs once at setup, never
    inside the iterations. With ``psd=True`` a minimum within ``tol`` of zero
    (relative to the spectrum's magnitude) is clamped to zero.
    """
    a = np.asarray(s, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError("expected a nonempty square matrix")
    fro = float(np.linalg.norm(a))
    if np.linalg.norm(a - a.T) > 1e-12 * fro:
        raise ValueError("matrix is not symmetric")
    if fro == 0.0:
        return 0.0, 0.0
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    lmin, lmax = float(w[0]), float(w[-1])
    if psd and abs(lmin) <= tol * max(abs(lmax), abs(lmin)):
        lmin = 0.0
    return lmin, lmax


def spectral_norm(a) -> float:
    """Largest singular value of ``a`` (LAPACK SVD)."""
    m = np.asarray(a, dtype=float)
    if m.size == 0:
        raise ValueError("spectral norm of an empty matrix")
    if not np.any(m):
        return 0.0
    return float(np.linalg.norm(m, 2))


def inflate(value: float, delta: float = SAFETY) -> float:
    return value * (1.0 + delta)
