"""Inexact (augmented) dual first-order methods for convex quadratic programs."""

from .dual import DfomSolver, Recovery, SolveReport, SolverConfig, Status, StopRule, solve
from .inner import MomentumKind, StopMode
from .model import ConeKind, InfeasibleSpecError, QpProblem, RawProblem, ingest
from .tuning import Case, Method

__all__ = [
    "Case",
    "ConeKind",
    "DfomSolver",
    "InfeasibleSpecError",
    "Method",
    "MomentumKind",
    "QpProblem",
    "RawProblem",
    "Recovery",
    "SolveReport",
    "SolverConfig",
    "Status",
    "StopMode",
    "StopRule",
    "ingest",
    "solve",
]
