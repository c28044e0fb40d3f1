"""Fixed-route CTM simulation: the shortest-path baseline.

Every class follows one fixed cell sequence.  The forward simulation uses
the same step convention as the assignment LP (demand injected at step t
occupies the source at t+1, a move at step t lands at t+1), shares cell
capacity across classes, serves cohorts within a cell first-in first-out
and resolves merge competition in ascending cell id order.  Every move
respects the CTM sending and receiving bounds, so the simulated flow
pattern is feasible for the assignment LP and its total travel time can
never beat the LP optimum.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .network import ORDINARY, SINK, CellNetwork
from .sodta import ClassDemand


class BaselineError(RuntimeError):
    pass


def min_hop_route(net: CellNetwork, source: int, sink: int) -> list[int]:
    """Shortest cell sequence by hop count (breadth-first, lowest id first)."""
    prev: dict[int, int] = {source: source}
    frontier = deque([source])
    while frontier:
        i = frontier.popleft()
        if i == sink:
            break
        for j in sorted(net.successors[i]):
            if j not in prev:
                prev[j] = i
                frontier.append(j)
    if sink not in prev:
        raise BaselineError(f"no route from cell {source} to cell {sink}")
    route = [sink]
    while route[-1] != source:
        route.append(prev[route[-1]])
    route.reverse()
    return route


def _validate_route(net: CellNetwork, route: list[int], cd: ClassDemand) -> None:
    if not route or route[0] != cd.source or route[-1] != cd.sink:
        raise BaselineError(
            f"class {cd.class_id}: route must run from source {cd.source} to sink {cd.sink}"
        )
    for i, j in zip(route, route[1:]):
        if j not in net.successors[i]:
            raise BaselineError(f"class {cd.class_id}: route edge {i}->{j} is disconnected")


@dataclass
class BaselineResult:
    ttt_steps: float
    curves: dict[int, np.ndarray]
    nct_min: dict[int, float]
    steps_run: int
    occupancy: dict[tuple[int, int, int], float]

    def total_travel_time_min(self, dt_seconds: float) -> float:
        return self.ttt_steps * dt_seconds / 60.0


def simulate_fixed_routes(
    net: CellNetwork,
    demands: list[ClassDemand],
    routes: dict[int, list[int]],
    max_steps: int = 100_000,
    record_occupancy: bool = False,
) -> BaselineResult:
    for cd in demands:
        _validate_route(net, routes[cd.class_id], cd)
    next_hop: dict[int, dict[int, int]] = {}
    for cd in demands:
        route = routes[cd.class_id]
        next_hop[cd.class_id] = {i: j for i, j in zip(route, route[1:])}

    injections: dict[int, list[tuple[int, int, int]]] = {}  # step -> (cell, class, count)
    for cd in demands:
        for t, v in cd.injections:
            injections.setdefault(t, []).append((cd.source, cd.class_id, v))
    last_injection = max(injections, default=0)

    # cell -> FIFO list of [entry_step, seq, class, count]
    cohorts: dict[int, list[list[float]]] = {i: [] for i in net.cells}
    seq = 0
    arrivals: dict[int, list[tuple[int, float]]] = {cd.class_id: [] for cd in demands}
    occupancy: dict[tuple[int, int, int], float] = {}
    ttt = 0.0
    horizon = 0

    # state at t=1 is the step-0 injection
    for cell, m, count in injections.get(0, []):
        cohorts[cell].append([1, seq, m, float(count)])
        seq += 1

    t = 1
    while t <= max_steps:
        total = sum(c[3] for cell in cohorts.values() for c in cell)
        if record_occupancy:
            for cell, items in cohorts.items():
                per_class: dict[int, float] = {}
                for _e, _s, m, q in items:
                    per_class[m] = per_class.get(m, 0.0) + q
                for m, q in per_class.items():
                    occupancy[(cell, int(m), t)] = q
        ttt += total
        horizon = t
        if total <= 1e-9 and t > last_injection:
            break

        receiving: dict[int, float] = {}
        for j, cell in net.cells.items():
            if cell.kind == ORDINARY:
                y = sum(c[3] for c in cohorts[j])
                receiving[j] = min(
                    net.inflow_capacity(j), net.wave_ratio * (net.n_jam[j] - y)
                )
            elif cell.kind == SINK:
                receiving[j] = math.inf
            else:
                receiving[j] = 0.0
        sending_cap: dict[int, float] = {}
        for i, cell in net.cells.items():
            if cell.kind == ORDINARY:
                sending_cap[i] = net.outflow_capacity(i, t)
            elif cell.kind == SINK:
                sending_cap[i] = 0.0
            else:
                sending_cap[i] = math.inf

        moved: dict[int, list[list[float]]] = {i: [] for i in net.cells}
        for i in sorted(net.cells):
            if not cohorts[i]:
                continue
            room_out = sending_cap[i]
            if room_out <= 1e-12:
                continue
            for cohort in sorted(cohorts[i], key=lambda c: (c[0], c[1])):
                entry, sq, m, count = cohort
                if count <= 1e-12:
                    continue
                j = next_hop[int(m)].get(i)
                if j is None:
                    continue
                q = min(count, room_out, receiving[j])
                if q <= 1e-12:
                    continue
                cohort[3] -= q
                room_out -= q
                receiving[j] -= q
                if net.cells[j].kind == SINK:
                    arrivals[int(m)].append((t, q))
                else:
                    moved[j].append([t + 1, seq, m, q])
                    seq += 1
                if room_out <= 1e-12:
                    break

        for j, extras in moved.items():
            cohorts[j].extend(extras)
        for cell, m, count in injections.get(t, []):
            cohorts[cell].append([t + 1, seq, m, float(count)])
            seq += 1
        for i in cohorts:
            cohorts[i] = [c for c in cohorts[i] if c[3] > 1e-12]
        t += 1
    else:
        raise BaselineError(f"network failed to drain within {max_steps} steps")

    curves: dict[int, np.ndarray] = {}
    nct: dict[int, float] = {}
    for cd in demands:
        arr = np.zeros(horizon + 1)
        for step, q in arrivals[cd.class_id]:
            arr[step] += q
        curves[cd.class_id] = np.cumsum(arr)
        positive = np.flatnonzero(arr > 1e-9)
        nct[cd.class_id] = float(positive[-1] * net.dt_seconds / 60.0) if positive.size else 0.0
    return BaselineResult(
        ttt_steps=ttt, curves=curves, nct_min=nct, steps_run=horizon, occupancy=occupancy
    )


def shortest_path_baseline(
    net: CellNetwork,
    demands: list[ClassDemand],
    routes: dict[int, list[int]] | None = None,
    max_steps: int = 100_000,
) -> tuple[BaselineResult, dict[int, list[int]]]:
    """Simulate all classes on fixed routes (min-hop unless provided)."""
    if routes is None:
        routes = {}
    full = dict(routes)
    for cd in demands:
        if cd.class_id not in full:
            full[cd.class_id] = min_hop_route(net, cd.source, cd.sink)
    result = simulate_fixed_routes(net, demands, full, max_steps=max_steps)
    return result, full
