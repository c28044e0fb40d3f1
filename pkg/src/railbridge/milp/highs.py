"""HiGHS-backed engine through scipy.optimize for large instances."""

from __future__ import annotations

import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .core import EQ, GE, LE, LinearModel, SolveResult

_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded", 4: "node_limit"}


def solve_with_highs(
    model: LinearModel,
    relax: bool = False,
    node_limit: int | None = None,
) -> SolveResult:
    model.validate()
    t0 = time.perf_counter()
    c = model.objective_vector()
    lb, ub = model.bounds()
    integrality = np.zeros(model.n_vars)
    if not relax:
        integrality[model.integer_indices()] = 1

    constraints = None
    if model.n_rows:
        lo = np.empty(model.n_rows)
        hi = np.empty(model.n_rows)
        for i, con in enumerate(model.constraints):
            if con.sense == LE:
                lo[i], hi[i] = -np.inf, con.rhs
            elif con.sense == GE:
                lo[i], hi[i] = con.rhs, np.inf
            else:
                lo[i], hi[i] = con.rhs, con.rhs
        constraints = LinearConstraint(model.matrix(), lo, hi)

    options = {"mip_rel_gap": 0.0, "disp": False}
    if node_limit is not None:
        options["node_limit"] = node_limit
    res = milp(
        c=c,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options=options,
    )
    wall = time.perf_counter() - t0
    status = _STATUS.get(res.status, "infeasible")
    stats = {
        "engine": "highs",
        "wall_time": wall,
        "name_index": model.name_index(),
        "nodes": getattr(res, "mip_node_count", None) or 0,
        "iterations": 0,
    }
    names = tuple(v.name for v in model.variables)
    if res.x is None or status not in ("optimal",):
        return SolveResult(status, None, None, stats, names=names)
    return SolveResult(status, float(res.fun), np.asarray(res.x, dtype=float), stats, names=names)
