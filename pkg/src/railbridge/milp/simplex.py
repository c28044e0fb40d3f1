"""Bounded-variable revised primal simplex with a dense basis inverse.

Two-phase method: phase 1 starts from a full artificial basis and minimizes
the infeasibility sum, phase 2 optimizes the real objective.  Entering
variables follow Dantzig pricing with an automatic switch to Bland's rule
after a run of degenerate pivots, which guarantees termination.  The basis
inverse is maintained by product-form updates and refactorized periodically
to bound numerical drift.

This engine targets desk-scale models (a few thousand rows); the ``auto``
engine routes anything larger to HiGHS.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import kernels
from .core import EQ, GE, LE, INF, LinearModel, SolveResult

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
_FEAS_TOL = 1e-7


@dataclass
class _Standard:
    """min c.x  s.t.  A x = b,  lb <= x <= ub, with slack and artificial tails."""

    A: sparse.csc_matrix
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    n_struct: int
    n_slack: int


def _standard_form(
    model: LinearModel,
    lb_override: np.ndarray | None = None,
    ub_override: np.ndarray | None = None,
) -> _Standard:
    n = model.n_vars
    m = model.n_rows
    lb, ub = model.bounds()
    if lb_override is not None:
        lb = np.maximum(lb, lb_override)
    if ub_override is not None:
        ub = np.minimum(ub, ub_override)
    A = model.matrix()
    slack_lb = np.zeros(m)
    slack_ub = np.zeros(m)
    for i, sense in enumerate(model.senses()):
        if sense == LE:
            slack_lb[i], slack_ub[i] = 0.0, INF
        elif sense == GE:
            slack_lb[i], slack_ub[i] = -INF, 0.0
        else:
            slack_lb[i], slack_ub[i] = 0.0, 0.0
    A_full = sparse.hstack([A, sparse.identity(m, format="csc")], format="csc")
    return _Standard(
        A=A_full,
        b=model.rhs_vector(),
        c=np.concatenate([model.objective_vector(), np.zeros(m)]),
        lb=np.concatenate([lb, slack_lb]),
        ub=np.concatenate([ub, slack_ub]),
        n_struct=n,
        n_slack=m,
    )


class _Tableau:
    """Mutable simplex state over the standard form plus artificials."""

    def __init__(self, std: _Standard):
        m = std.b.shape[0]
        self.m = m
        self.n_real = std.A.shape[1]

        nearest = np.where(np.abs(std.lb) <= np.abs(std.ub), std.lb, std.ub)
        nearest = np.where(np.isfinite(nearest), nearest, np.where(np.isfinite(std.lb), std.lb, std.ub))
        nearest = np.where(np.isfinite(nearest), nearest, 0.0)
        self.values = nearest.astype(float)

        residual = std.b - std.A @ self.values
        signs = np.where(residual >= 0.0, 1.0, -1.0)
        art = sparse.diags(signs, format="csc")
        self.A = sparse.hstack([std.A, art], format="csc")
        self.AT = self.A.T.tocsr()
        self.n_total = self.n_real + m
        self.lb = np.concatenate([std.lb, np.zeros(m)])
        self.ub = np.concatenate([std.ub, np.full(m, INF)])
        self.values = np.concatenate([self.values, np.abs(residual)])

        self.basis = np.arange(self.n_real, self.n_real + m)
        # status: 0 at lb, 1 at ub, 2 basic
        self.status = np.zeros(self.n_total, dtype=np.int8)
        at_ub = (self.values == self.ub) & np.isfinite(self.ub) & (self.lb != self.ub)
        self.status[at_ub] = 1
        self.status[self.basis] = 2

        self.binv = sparse.diags(signs).toarray()
        self.b = std.b
        self.iterations = 0
        self.pivots_since_factor = 0

    # -- linear algebra helpers -------------------------------------------

    def column(self, j: int) -> np.ndarray:
        a = self.A
        start, end = a.indptr[j], a.indptr[j + 1]
        return self.binv[:, a.indices[start:end]] @ a.data[start:end]

    def refactor(self) -> None:
        dense = self.A[:, self.basis].toarray()
        try:
            self.binv = np.linalg.inv(dense)
        except np.linalg.LinAlgError:  # keep product-form inverse on singular drift
            return
        self.pivots_since_factor = 0
        self.recompute_basics()

    def recompute_basics(self) -> None:
        nonbasic_values = self.values.copy()
        nonbasic_values[self.basis] = 0.0
        rhs = self.b - self.A @ nonbasic_values
        self.values[self.basis] = self.binv @ rhs

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.basis] @ self.binv

    # -- core loop ----------------------------------------------------------

    def run(self, c: np.ndarray, iter_limit: int, can_unbound: bool) -> str:
        m = self.m
        bland = False
        degenerate_run = 0
        free_lb = ~np.isfinite(self.lb)
        while True:
            if self.iterations >= iter_limit:
                return "iteration_limit"
            self.iterations += 1

            y = self.duals(c)
            d = c - self.AT @ y
            eligibility = self.status.copy()
            fixed = self.lb == self.ub
            eligibility[fixed & (eligibility != 2)] = 2
            # nonbasic free variables may move either way
            floating = free_lb & (eligibility == 0)
            if floating.any():
                eligibility[floating & (d > 0)] = 1
            j = kernels.choose_entering(d, eligibility, _COST_TOL, bland)
            if j < 0:
                return "optimal"

            sigma = 1.0 if eligibility[j] == 0 else -1.0
            col = self.column(j)
            limit = self.ub[j] - self.lb[j]
            if not np.isfinite(limit):
                limit = INF
            leave, step = kernels.ratio_test(
                col,
                self.values[self.basis],
                self.lb[self.basis],
                self.ub[self.basis],
                sigma,
                limit,
                _PIVOT_TOL,
            )
            if leave < 0 and not np.isfinite(step):
                if can_unbound:
                    return "unbounded"
                raise ArithmeticError("phase-1 objective unbounded; numerical failure")

            if step <= _PIVOT_TOL:
                degenerate_run += 1
                if degenerate_run > max(200, 2 * m) and not bland:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            if step > 0.0:
                self.values[self.basis] -= sigma * step * col
            self.values[j] += sigma * step

            if leave < 0:
                self.status[j] = 1 - self.status[j]
            else:
                out = self.basis[leave]
                hits_lb = sigma * col[leave] > 0
                self.values[out] = self.lb[out] if hits_lb else self.ub[out]
                self.status[out] = 0 if hits_lb else 1
                self.status[j] = 2
                self.basis[leave] = j
                kernels.update_binv(self.binv, col, leave)
                self.pivots_since_factor += 1
                if self.pivots_since_factor >= self._refactor_period():
                    self.refactor()

    def _refactor_period(self) -> int:
        if self.m <= 400:
            return 150
        if self.m <= 1200:
            return 500
        return 1500


def solve_lp_embedded(
    model: LinearModel,
    eps: float = 1e-6,
    iter_limit: int = 500_000,
    lb_override: np.ndarray | None = None,
    ub_override: np.ndarray | None = None,
) -> SolveResult:
    """Solve the LP relaxation of ``model`` (integrality ignored)."""
    model.validate()
    t0 = time.perf_counter()
    std = _standard_form(model, lb_override, ub_override)
    if np.any(std.lb > std.ub):
        return SolveResult(
            status="infeasible",
            objective=None,
            values=None,
            stats={"iterations": 0, "engine": "embedded", "wall_time": 0.0,
                   "name_index": model.name_index()},
            names=tuple(v.name for v in model.variables),
        )
    tab = _Tableau(std)

    phase1_cost = np.zeros(tab.n_total)
    phase1_cost[tab.n_real:] = 1.0
    status = tab.run(phase1_cost, iter_limit, can_unbound=False)
    stats = {"engine": "embedded", "name_index": model.name_index()}
    names = tuple(v.name for v in model.variables)
    if status == "iteration_limit":
        stats.update(iterations=tab.iterations, wall_time=time.perf_counter() - t0)
        return SolveResult("iteration_limit", None, None, stats, names=names)
    infeasibility = float(phase1_cost @ tab.values)
    if infeasibility > max(_FEAS_TOL, eps):
        stats.update(iterations=tab.iterations, wall_time=time.perf_counter() - t0)
        return SolveResult("infeasible", None, None, stats, names=names)

    # artificials are pinned at zero for phase 2
    tab.ub[tab.n_real:] = 0.0
    tab.refactor()
    phase2_cost = np.concatenate([std.c, np.zeros(tab.m)])
    status = tab.run(phase2_cost, iter_limit, can_unbound=True)
    wall = time.perf_counter() - t0
    stats.update(iterations=tab.iterations, wall_time=wall)
    if status in ("iteration_limit", "unbounded"):
        return SolveResult(status, None, None, stats, names=names)

    x = tab.values[: std.n_struct].copy()
    binary_like = x[np.abs(x) < 1e-11]
    if binary_like.size:
        x[np.abs(x) < 1e-11] = 0.0
    objective = float(std.c[: std.n_struct] @ x)
    duals = tab.duals(phase2_cost)
    return SolveResult("optimal", objective, x, stats, duals=duals, names=names)
