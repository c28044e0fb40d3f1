"""Sparse linear/mixed-integer models, solvers and MPS export.

Two interchangeable engines sit behind ``solve_lp`` / ``solve_milp``: the
embedded bounded-variable revised simplex with best-first branch and bound
(deterministic, desk-scale), and a HiGHS-backed engine through scipy for
large instances.  ``engine="auto"`` picks by model size.
"""

from .core import LinearModel, SolveResult, Variable, Constraint
from .engine import solve_lp, solve_milp
from .mps import export_mps, import_mps

__all__ = [
    "LinearModel",
    "SolveResult",
    "Variable",
    "Constraint",
    "solve_lp",
    "solve_milp",
    "export_mps",
    "import_mps",
]
