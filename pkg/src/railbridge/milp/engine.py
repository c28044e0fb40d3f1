"""Engine dispatch: embedded simplex/branch-and-bound or HiGHS by size."""

from __future__ import annotations

from .bnb import solve_milp_embedded
from .core import LinearModel, SolveResult
from .highs import solve_with_highs
from .simplex import solve_lp_embedded

# Above these dimensions the dense basis inverse of the embedded engine is
# no longer sensible and auto routes to HiGHS.
EMBEDDED_MAX_ROWS = 2500
EMBEDDED_MAX_COLS = 4000


def pick_engine(model: LinearModel, engine: str = "auto") -> str:
    if engine in ("embedded", "highs"):
        return engine
    if engine != "auto":
        raise ValueError(f"unknown engine {engine!r}")
    if model.n_rows <= EMBEDDED_MAX_ROWS and model.n_vars <= EMBEDDED_MAX_COLS:
        return "embedded"
    return "highs"


def solve_lp(
    model: LinearModel,
    eps: float = 1e-6,
    iter_limit: int = 500_000,
    engine: str = "auto",
    **_ignored,
) -> SolveResult:
    """LP solve with integrality relaxed."""
    chosen = pick_engine(model, engine)
    if chosen == "embedded":
        return solve_lp_embedded(model, eps=eps, iter_limit=iter_limit)
    return solve_with_highs(model, relax=True)


def solve_milp(
    model: LinearModel,
    eps: float = 1e-6,
    eps_int: float = 1e-6,
    node_limit: int = 200_000,
    iter_limit: int = 500_000,
    threads: int = 1,
    engine: str = "auto",
    **_ignored,
) -> SolveResult:
    """Proven-optimal mixed-integer solve (zero gap within tolerance)."""
    chosen = pick_engine(model, engine)
    if chosen == "embedded":
        return solve_milp_embedded(
            model,
            eps=eps,
            eps_int=eps_int,
            node_limit=node_limit,
            iter_limit=iter_limit,
            threads=threads,
        )
    return solve_with_highs(model, relax=False, node_limit=node_limit)
