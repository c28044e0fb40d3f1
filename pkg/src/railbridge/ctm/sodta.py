"""System-optimal dynamic traffic assignment LP over the cell network.

Time runs in discrete steps t = 0..T with everything empty at t = 0.  A
flow variable z at step t moves vehicles between step t and t+1, demand
injected at step t materializes in its source cell at t+1, and per class
the total inflow into its sink over the horizon must equal its injected
demand, which forces every vehicle to arrive.

Capacity families: per class, cell outflow is bounded by the class's own
occupancy (sources included, so vehicles cannot pass through a source in
their injection step and the LP matches a time-stepped simulation);
aggregate over classes, cell outflow is bounded by the signal-modulated
capacity, cell inflow by the base capacity and by the backward-wave room
w/v (N - occupancy).  Classes are one vehicle type on shared lanes, so the
capacity and room bounds couple them.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..milp.core import CONTINUOUS, EQ, GE, LE, LinearModel
from ..milp.engine import solve_milp, solve_lp
from .network import ORDINARY, SINK, SOURCE, CellNetwork


class UnreachableError(RuntimeError):
    """A class's sink cannot be reached from its source at all."""


class SodtaInfeasible(RuntimeError):
    pass


@dataclass
class ClassDemand:
    """Injection schedule of one vehicle class, in steps."""

    class_id: int
    source: int
    sink: int
    injections: list[tuple[int, int]]  # (step, vehicles)

    @property
    def total(self) -> int:
        return sum(v for _t, v in self.injections)

    @property
    def last_step(self) -> int:
        return max((t for t, _v in self.injections), default=0)


def demand_to_steps(matrix, bindings: dict[int, tuple[int, int]], dt_seconds: float) -> list[ClassDemand]:
    """Dispatch-period demand to step injections (dispatch at period end)."""
    steps_per_period = max(1, round(matrix.period_min * 60.0 / dt_seconds))
    per_class: dict[int, list[tuple[int, int]]] = {}
    for (k, m), v in sorted(matrix.entries.items()):
        per_class.setdefault(m, []).append((k * steps_per_period, v))
    out = []
    for m, (src, snk) in sorted(bindings.items()):
        out.append(ClassDemand(m, src, snk, per_class.get(m, [])))
    return out


def _forward_reach(net: CellNetwork, start: int) -> set[int]:
    """Cells reachable along connectors; a permanently red cell never sends."""
    seen = {start}
    frontier = deque([start])
    while frontier:
        i = frontier.popleft()
        plan = net.signals.get(i)
        if plan is not None and plan.green <= 0:
            continue
        for j in net.successors[i]:
            if j not in seen:
                seen.add(j)
                frontier.append(j)
    return seen


def _backward_reach(net: CellNetwork, start: int) -> set[int]:
    seen = {start}
    frontier = deque([start])
    while frontier:
        j = frontier.popleft()
        for i in net.predecessors[j]:
            plan = net.signals.get(i)
            if plan is not None and plan.green <= 0:
                continue
            if i not in seen:
                seen.add(i)
                frontier.append(i)
    return seen


def check_reachability(net: CellNetwork, demands: list[ClassDemand]) -> dict[int, set[int]]:
    """Per class: cells on some source-to-sink path; raises when none exists."""
    out: dict[int, set[int]] = {}
    for cd in demands:
        forward = _forward_reach(net, cd.source)
        if cd.sink not in forward:
            raise UnreachableError(
                f"class {cd.class_id}: sink cell {cd.sink} unreachable from source {cd.source}"
            )
        backward = _backward_reach(net, cd.sink)
        out[cd.class_id] = forward & backward
    return out


def auto_horizon(net: CellNetwork, demands: list[ClassDemand], usable: dict[int, set[int]]) -> int:
    last_inj = max((cd.last_step for cd in demands), default=0)
    total = sum(cd.total for cd in demands)
    diameter = 0
    for cd in demands:
        dist = {cd.source: 0}
        frontier = deque([cd.source])
        while frontier:
            i = frontier.popleft()
            for j in net.successors[i]:
                if j in usable[cd.class_id] and j not in dist:
                    dist[j] = dist[i] + 1
                    frontier.append(j)
        diameter = max(diameter, dist.get(cd.sink, 0))
    q_eff = math.inf
    for i in net.ordinary_cells():
        q = net.q_base[i]
        plan = net.signals.get(i)
        if plan is not None and plan.cycle > 0:
            q *= plan.green / plan.cycle
        q_eff = min(q_eff, q)
    q_eff = max(0.5, q_eff if math.isfinite(q_eff) else 1.0)
    cycles = max((p.cycle for p in net.signals.values()), default=0)
    return int(last_inj + diameter + math.ceil(total / q_eff) + cycles + 10)


@dataclass
class SodtaIndex:
    T: int
    demands: list[ClassDemand]
    usable: dict[int, set[int]]
    y: dict[tuple[int, int, int], int] = field(default_factory=dict)  # (cell, class, t)
    z: dict[tuple[int, int, int, int], int] = field(default_factory=dict)  # (i, j, class, t)


def build_sodta(
    net: CellNetwork,
    demands: list[ClassDemand],
    horizon_steps: int | None = None,
    holding_weights: dict[int, float] | None = None,
) -> tuple[LinearModel, SodtaIndex]:
    usable = check_reachability(net, demands)
    T = horizon_steps if horizon_steps is not None else auto_horizon(net, demands, usable)
    lm = LinearModel("sodta")
    idx = SodtaIndex(T=T, demands=demands, usable=usable)
    alpha = holding_weights or {}

    inj: dict[tuple[int, int, int], int] = {}
    for cd in demands:
        for t, v in cd.injections:
            if t >= T:
                raise SodtaInfeasible(
                    f"injection at step {t} outside horizon {T}; increase horizon_steps"
                )
            inj[(cd.source, cd.class_id, t)] = inj.get((cd.source, cd.class_id, t), 0) + v

    # variables
    for cd in demands:
        m = cd.class_id
        for i in sorted(usable[m]):
            kind = net.cells[i].kind
            if kind == SINK:
                continue
            for t in range(1, T + 1):
                w = alpha.get(t, 1.0)
                idx.y[(i, m, t)] = lm.add_variable(f"y[{i},{m},{t}]", CONTINUOUS, 0.0, math.inf, w)
        for i in sorted(usable[m]):
            if net.cells[i].kind == SINK:
                continue
            for j in net.successors[i]:
                if j not in usable[m]:
                    continue
                for t in range(1, T):
                    idx.z[(i, j, m, t)] = lm.add_variable(
                        f"z[{i},{j},{m},{t}]", CONTINUOUS, 0.0, math.inf, 0.0
                    )

    # conservation
    for cd in demands:
        m = cd.class_id
        for i in sorted(usable[m]):
            kind = net.cells[i].kind
            if kind == SINK:
                continue
            for t in range(1, T + 1):
                row = {idx.y[(i, m, t)]: 1.0}
                if t > 1:
                    row[idx.y[(i, m, t - 1)]] = -1.0
                    if kind == ORDINARY:
                        for k in net.predecessors[i]:
                            zid = idx.z.get((k, i, m, t - 1))
                            if zid is not None:
                                row[zid] = row.get(zid, 0.0) - 1.0
                    for j in net.successors[i]:
                        zid = idx.z.get((i, j, m, t - 1))
                        if zid is not None:
                            row[zid] = row.get(zid, 0.0) + 1.0
                rhs = float(inj.get((i, m, t - 1), 0)) if kind == SOURCE else 0.0
                lm.add_constraint(f"cons[{i},{m},{t}]", row, EQ, rhs)
        # every injected vehicle arrives
        row = {}
        for k in net.predecessors[cd.sink]:
            for t in range(1, T):
                zid = idx.z.get((k, cd.sink, m, t))
                if zid is not None:
                    row[zid] = 1.0
        lm.add_constraint(f"sink[{m}]", row, EQ, float(cd.total))

    # per-class outflow bounded by own occupancy (sources included)
    for cd in demands:
        m = cd.class_id
        for i in sorted(usable[m]):
            if net.cells[i].kind == SINK:
                continue
            for t in range(1, T):
                row = {}
                for j in net.successors[i]:
                    zid = idx.z.get((i, j, m, t))
                    if zid is not None:
                        row[zid] = 1.0
                if row:
                    row[idx.y[(i, m, t)]] = -1.0
                    lm.add_constraint(f"out_y[{i},{m},{t}]", row, LE, 0.0)

    # aggregate capacity and backward-wave room on ordinary cells
    ratio = net.wave_ratio
    for i in net.ordinary_cells():
        for t in range(1, T):
            out_row = {}
            in_row = {}
            occ_row = {}
            for cd in demands:
                m = cd.class_id
                if i not in usable[m]:
                    continue
                for j in net.successors[i]:
                    zid = idx.z.get((i, j, m, t))
                    if zid is not None:
                        out_row[zid] = 1.0
                for k in net.predecessors[i]:
                    zid = idx.z.get((k, i, m, t))
                    if zid is not None:
                        in_row[zid] = 1.0
                yid = idx.y.get((i, m, t))
                if yid is not None:
                    occ_row[yid] = ratio
            if out_row:
                lm.add_constraint(f"out_cap[{i},{t}]", out_row, LE, net.outflow_capacity(i, t))
            if in_row:
                lm.add_constraint(f"in_cap[{i},{t}]", in_row, LE, net.inflow_capacity(i))
                lm.add_constraint(
                    f"in_jam[{i},{t}]", {**in_row, **occ_row}, LE, ratio * net.n_jam[i]
                )
    return lm, idx


# ---------------------------------------------------------------------------
# Solution
# ---------------------------------------------------------------------------


@dataclass
class SodtaSolution:
    T: int
    dt_seconds: float
    objective_steps: float
    occupancy: dict[tuple[int, int, int], float]
    flows: dict[tuple[int, int, int, int], float]
    curves: dict[int, np.ndarray]  # class -> cumulative arrivals by step
    nct_min: dict[int, float]
    fleet: dict[int, int]

    @property
    def total_travel_time_min(self) -> float:
        return self.objective_steps * self.dt_seconds / 60.0


def solve_sodta(
    model: LinearModel,
    idx: SodtaIndex,
    net: CellNetwork,
    engine: str = "auto",
    eps: float = 1e-6,
) -> SodtaSolution:
    res = solve_lp(model, eps=eps, engine=engine)
    if res.status == "infeasible":
        raise SodtaInfeasible(
            "assignment LP infeasible; the horizon is too short for every vehicle to arrive"
        )
    if not res.optimal:
        raise SodtaInfeasible(f"assignment LP ended with status {res.status}")
    x = res.values
    occupancy = {key: float(x[i]) for key, i in idx.y.items() if abs(x[i]) > 1e-12}
    flows = {key: float(x[i]) for key, i in idx.z.items() if abs(x[i]) > 1e-12}

    curves: dict[int, np.ndarray] = {}
    nct: dict[int, float] = {}
    fleet: dict[int, int] = {}
    for cd in idx.demands:
        m = cd.class_id
        arr = np.zeros(idx.T + 1)
        for k in net.predecessors[cd.sink]:
            for t in range(1, idx.T):
                q = flows.get((k, cd.sink, m, t), 0.0)
                if q:
                    arr[t] += q
        curve = np.cumsum(arr)
        curves[m] = curve
        positive = np.flatnonzero(arr > 1e-7)
        nct[m] = float(positive[-1] * net.dt_seconds / 60.0) if positive.size else 0.0
        fleet[m] = cd.total
    return SodtaSolution(
        T=idx.T,
        dt_seconds=net.dt_seconds,
        objective_steps=float(res.objective),
        occupancy=occupancy,
        flows=flows,
        curves=curves,
        nct_min=nct,
        fleet=fleet,
    )


# ---------------------------------------------------------------------------
# Independent audits
# ---------------------------------------------------------------------------


def audit_conservation(sol: SodtaSolution, idx: SodtaIndex, net: CellNetwork) -> float:
    """Largest conservation residual, recomputed from the solution arrays."""
    inj: dict[tuple[int, int, int], float] = {}
    for cd in idx.demands:
        for t, v in cd.injections:
            inj[(cd.source, cd.class_id, t)] = inj.get((cd.source, cd.class_id, t), 0.0) + v
    worst = 0.0
    for cd in idx.demands:
        m = cd.class_id
        for i in idx.usable[m]:
            kind = net.cells[i].kind
            if kind == SINK:
                continue
            for t in range(1, idx.T + 1):
                acc = sol.occupancy.get((i, m, t), 0.0) - sol.occupancy.get((i, m, t - 1), 0.0)
                if kind == ORDINARY:
                    acc -= sum(
                        sol.flows.get((k, i, m, t - 1), 0.0) for k in net.predecessors[i]
                    )
                acc += sum(sol.flows.get((i, j, m, t - 1), 0.0) for j in net.successors[i])
                acc -= inj.get((i, m, t - 1), 0.0)
                worst = max(worst, abs(acc))
    return worst


def audit_red_outflow(sol: SodtaSolution, net: CellNetwork) -> float:
    """Largest outflow leaving a signalized cell during a red step."""
    worst = 0.0
    for (i, _j, _m, t), q in sol.flows.items():
        if i in net.signals and not net.is_green(i, t):
            worst = max(worst, q)
    return worst


def audit_arrivals(sol: SodtaSolution) -> list[str]:
    bad = []
    for m, curve in sol.curves.items():
        if np.any(np.diff(curve) < -1e-7):
            bad.append(f"class {m}: cumulative arrivals decrease")
        if abs(curve[-1] - sol.fleet[m]) > 1e-6:
            bad.append(f"class {m}: arrivals {curve[-1]:g} != fleet {sol.fleet[m]}")
    return bad


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def curves_csv(sol: SodtaSolution) -> str:
    lines = ["class,t,cumulative_arrivals"]
    for m in sorted(sol.curves):
        curve = sol.curves[m]
        for t in range(curve.shape[0]):
            lines.append(f"{m},{t},{curve[t]:.6g}")
    return "\n".join(lines) + "\n"


def nct_csv(sol: SodtaSolution) -> str:
    lines = ["class,vehicles,nct_min"]
    for m in sorted(sol.nct_min):
        lines.append(f"{m},{sol.fleet[m]},{sol.nct_min[m]:.6g}")
    return "\n".join(lines) + "\n"


def cells_csv(sol: SodtaSolution) -> str:
    lines = ["t,cell,class,occupancy"]
    for (i, m, t), v in sorted(sol.occupancy.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
        lines.append(f"{t},{i},{m},{v:.6g}")
    return "\n".join(lines) + "\n"
