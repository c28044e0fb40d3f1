"""Linear model container shared by every solver engine.

Models are always minimization.  Variables carry bounds, a kind
(continuous, binary, integer) and their objective coefficient; constraints
are sparse coefficient rows with a sense and right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

CONTINUOUS = "c"
BINARY = "b"
INTEGER = "i"

LE = "<="
GE = ">="
EQ = "="

INF = math.inf


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = INF
    obj: float = 0.0


@dataclass
class Constraint:
    name: str
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class SolveResult:
    """Solver outcome with primal values and run statistics.

    ``status`` is one of optimal, infeasible, unbounded, iteration_limit,
    node_limit.  ``duals`` (one multiplier per row) is populated by the
    embedded simplex for LP solves.
    """

    status: str
    objective: float | None
    values: np.ndarray | None
    stats: dict = field(default_factory=dict)
    duals: np.ndarray | None = None
    names: tuple[str, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, name: str) -> float:
        idx = self.stats["name_index"][name]
        return float(self.values[idx])


class LinearModel:
    """Sparse minimization model with bounded, typed variables."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self._var_index: dict[str, int] = {}
        self._row_index: dict[str, int] = {}

    # -- construction -----------------------------------------------------

    def add_variable(
        self,
        name: str,
        kind: str = CONTINUOUS,
        lb: float = 0.0,
        ub: float = INF,
        obj: float = 0.0,
    ) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable {name}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ModelError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables.append(Variable(name, kind, lb, ub, obj))
        idx = len(self.variables) - 1
        self._var_index[name] = idx
        return idx

    def add_constraint(self, name: str, coeffs: dict[int, float], sense: str, rhs: float) -> int:
        if sense not in (LE, GE, EQ):
            raise ModelError(f"bad sense {sense!r}")
        if name in self._row_index:
            raise ModelError(f"duplicate constraint {name}")
        for idx in coeffs:
            if not (0 <= idx < len(self.variables)):
                raise ModelError(f"constraint {name} references undeclared variable {idx}")
        self.constraints.append(Constraint(name, dict(coeffs), sense, rhs))
        row = len(self.constraints) - 1
        self._row_index[name] = row
        return row

    def var_index(self, name: str) -> int:
        return self._var_index[name]

    # -- views --------------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def objective_vector(self) -> np.ndarray:
        return np.array([v.obj for v in self.variables], dtype=float)

    def integer_indices(self) -> np.ndarray:
        return np.array(
            [i for i, v in enumerate(self.variables) if v.kind in (BINARY, INTEGER)], dtype=int
        )

    def matrix(self) -> sparse.csc_matrix:
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                if a != 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(a)
        return sparse.csc_matrix(
            (vals, (rows, cols)), shape=(self.n_rows, self.n_vars), dtype=float
        )

    def rhs_vector(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def senses(self) -> list[str]:
        return [c.sense for c in self.constraints]

    def name_index(self) -> dict[str, int]:
        return dict(self._var_index)

    # -- checks --------------------------------------------------------------

    def validate(self) -> None:
        for v in self.variables:
            if v.kind == BINARY and not (v.lb >= 0.0 and v.ub <= 1.0):
                raise ModelError(f"binary variable {v.name} must have bounds within [0,1]")

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Signed constraint violations of x (0 when satisfied)."""
        A = self.matrix()
        ax = A @ x
        out = np.zeros(self.n_rows)
        for i, con in enumerate(self.constraints):
            if con.sense == LE:
                out[i] = max(0.0, ax[i] - con.rhs)
            elif con.sense == GE:
                out[i] = max(0.0, con.rhs - ax[i])
            else:
                out[i] = abs(ax[i] - con.rhs)
        return out

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x)

    def relaxed(self) -> "LinearModel":
        """Copy with integrality dropped."""
        m = LinearModel(self.name + "-relaxed")
        for v in self.variables:
            m.add_variable(v.name, CONTINUOUS, v.lb, v.ub, v.obj)
        for c in self.constraints:
            m.add_constraint(c.name, c.coeffs, c.sense, c.rhs)
        return m

    def signature(self) -> tuple:
        """Order-insensitive structural fingerprint used by round-trip tests."""
        vars_sig = sorted(
            (v.kind, round(v.lb, 9), round(v.ub if v.ub != INF else INF, 9), round(v.obj, 9))
            for v in self.variables
        )
        rows_sig = sorted(
            (
                c.sense,
                round(c.rhs, 9),
                tuple(sorted((j, round(a, 9)) for j, a in c.coeffs.items() if a != 0.0)),
            )
            for c in self.constraints
        )
        return (tuple(vars_sig), tuple(rows_sig))
