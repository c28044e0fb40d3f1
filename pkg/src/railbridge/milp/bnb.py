"""Best-first branch and bound over the embedded simplex.

Branching picks the most fractional integer variable (ties to the lowest
variable id), node selection is best bound first with a deterministic
sequence tie-break, and the incumbent only ever improves, so the reported
optimum is independent of the worker count.  No warm starts, cuts or
presolve: node relaxations are solved from scratch.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import LinearModel, SolveResult
from .simplex import solve_lp_embedded

_PRUNE_TOL = 1e-9


def _materialize(model: LinearModel, overrides: dict[int, tuple[float, float]]):
    if not overrides:
        return None, None
    lb, ub = model.bounds()
    for j, (lo, hi) in overrides.items():
        lb[j] = max(lb[j], lo)
        ub[j] = min(ub[j], hi)
    return lb, ub


def _most_fractional(x: np.ndarray, int_idx: np.ndarray, eps_int: float) -> int | None:
    best_j = None
    best_score = math.inf
    for j in int_idx:
        frac = x[j] - math.floor(x[j])
        dist = min(frac, 1.0 - frac)
        if dist <= eps_int:
            continue
        score = abs(frac - 0.5)
        if score < best_score - 1e-15:
            best_score = score
            best_j = int(j)
    return best_j


def solve_milp_embedded(
    model: LinearModel,
    eps: float = 1e-6,
    eps_int: float = 1e-6,
    node_limit: int = 200_000,
    iter_limit: int = 500_000,
    threads: int = 1,
) -> SolveResult:
    t0 = time.perf_counter()
    int_idx = model.integer_indices()
    names = tuple(v.name for v in model.variables)
    base_stats = {"engine": "embedded", "name_index": model.name_index()}

    def lp(overrides: dict[int, tuple[float, float]]) -> SolveResult:
        lb, ub = _materialize(model, overrides)
        return solve_lp_embedded(model, eps=eps, iter_limit=iter_limit, lb_override=lb, ub_override=ub)

    if int_idx.size == 0:
        res = lp({})
        res.stats.update(nodes=1)
        return res

    counter = itertools.count()
    incumbent_x: np.ndarray | None = None
    incumbent_obj = math.inf
    nodes_explored = 0
    total_iters = 0
    heap: list[tuple[float, int, dict[int, tuple[float, float]]]] = []
    heap.append((-math.inf, next(counter), {}))
    status = "optimal"
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    try:
        while heap:
            if nodes_explored >= node_limit:
                status = "node_limit"
                break
            best_bound = heap[0][0]
            if incumbent_x is not None and best_bound >= incumbent_obj - _PRUNE_TOL:
                break  # proven optimal
            wave = []
            take = max(1, threads)
            while heap and len(wave) < take:
                wave.append(heapq.heappop(heap))
            if pool is not None and len(wave) > 1:
                results = list(pool.map(lambda node: lp(node[2]), wave))
            else:
                results = [lp(node[2]) for node in wave]

            for (bound, _, overrides), res in zip(wave, results):
                nodes_explored += 1
                total_iters += res.stats.get("iterations", 0)
                if res.status == "unbounded":
                    return SolveResult(
                        "unbounded", None, None,
                        {**base_stats, "nodes": nodes_explored,
                         "iterations": total_iters,
                         "wall_time": time.perf_counter() - t0},
                        names=names,
                    )
                if res.status == "iteration_limit":
                    status = "iteration_limit"
                    continue
                if res.status != "optimal":
                    continue  # infeasible node
                if incumbent_x is not None and res.objective >= incumbent_obj - _PRUNE_TOL:
                    continue
                j = _most_fractional(res.values, int_idx, eps_int)
                if j is None:
                    x = res.values.copy()
                    x[int_idx] = np.round(x[int_idx])
                    if float(np.max(model.residuals(x), initial=0.0)) <= max(eps, 1e-7):
                        obj = model.objective_value(x)
                    else:
                        x, obj = res.values, res.objective
                    if obj < incumbent_obj - _PRUNE_TOL:
                        incumbent_obj = obj
                        incumbent_x = x
                    continue
                v = res.values[j]
                down = dict(overrides)
                down[j] = (
                    max(down.get(j, (-math.inf, math.inf))[0], -math.inf),
                    min(down.get(j, (-math.inf, math.inf))[1], math.floor(v)),
                )
                up = dict(overrides)
                up[j] = (
                    max(up.get(j, (-math.inf, math.inf))[0], math.ceil(v)),
                    min(up.get(j, (-math.inf, math.inf))[1], math.inf),
                )
                heapq.heappush(heap, (res.objective, next(counter), down))
                heapq.heappush(heap, (res.objective, next(counter), up))
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    wall = time.perf_counter() - t0
    stats = {**base_stats, "nodes": nodes_explored, "iterations": total_iters, "wall_time": wall}
    if incumbent_x is None:
        final = "infeasible" if status == "optimal" else status
        return SolveResult(final, None, None, stats, names=names)
    return SolveResult(status, incumbent_obj, incumbent_x, stats, names=names)
