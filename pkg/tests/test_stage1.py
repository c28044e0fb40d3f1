"""Stage-1 model: examples, audits and the exhaustive enumeration oracle."""

from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest

from railbridge.milp.engine import solve_milp
from railbridge.model import DisruptionSpec, PassengerFlow, SolverConfig
from railbridge.reschedule import (
    Stage1Inputs,
    accumulation_series,
    admissible_pairs,
    audit_capacity,
    audit_conservation,
    audit_disruption,
    audit_headways,
    build_stage1,
    objective_m,
    prepare_stage1,
    solve_stage1,
)

from conftest import make_flow, make_line, make_scenario, make_service


# ---------------------------------------------------------------------------
# Brute-force oracle: enumerate activation vectors and integer assignments
# ---------------------------------------------------------------------------


def _activation_feasible(inputs: Stage1Inputs, active: dict[str, int]) -> bool:
    area = inputs.area
    visit: dict[str, set[int]] = {}
    for svc in inputs.scenario.services:
        theta = inputs.conflict[svc.id]
        if theta == 0:
            visit[svc.id] = set(range(1, area.n_stations + 1))
        elif active[svc.id]:
            visit[svc.id] = set(area.ms1 if svc.direction == 1 else area.ms2)
        else:
            visit[svc.id] = set()
    for child in inputs.children:
        parent = child.id[:-2]
        turn = inputs.linkage[(parent, child.id)]
        if active.get(parent, 1) and inputs.conflict[parent]:
            if child.direction == 1:
                visit[child.id] = set(range(turn, area.n_stations + 1))
            else:
                visit[child.id] = set(range(1, turn + 1))
        else:
            visit[child.id] = set()
    for (u, v, r), clash in inputs.indicators.headway_clash.items():
        if clash and r in visit.get(u, ()) and r in visit.get(v, ()):
            return False
    return True


def _splits(total: int, bins: int):
    if bins == 0:
        yield ()
        return
    for first in range(total + 1):
        for rest in _splits(total - first, bins - 1):
            yield (first,) + rest


def brute_force_stage1(inputs: Stage1Inputs, big_m: float) -> float:
    ind = inputs.indicators
    scn = inputs.scenario
    pairs = admissible_pairs(inputs)
    conflicting = [s.id for s in scn.services if inputs.conflict[s.id]]
    child_of = {pid: cid for (pid, cid) in inputs.linkage}
    best = math.inf

    for bits in itertools.product([0, 1], repeat=len(conflicting)):
        active = {sid: 1 for sid in (s.id for s in scn.services) if sid not in conflicting}
        active.update(dict(zip(conflicting, bits)))
        for pid, cid in child_of.items():
            active[cid] = active[pid] if inputs.conflict[pid] else 0
        if not _activation_feasible(inputs, active):
            continue

        flow_options = []
        for f in scn.flows:
            avail = [u for (p, u) in pairs if p == f.id and active.get(u, 0)]
            flow_options.append((f, avail))

        def assignments(level: int, loads: dict, cost: float):
            nonlocal best
            if cost >= best:
                return
            if level == len(flow_options):
                best = min(best, cost)
                return
            f, avail = flow_options[level]
            for split in _splits(f.size, len(avail)):
                stranded = f.size - sum(split)
                new_loads = dict(loads)
                ok = True
                extra = stranded * big_m
                for u, q in zip(avail, split):
                    if not q:
                        continue
                    extra += q * ind.board_wait[(f.id, u)]
                    for r in ind.onboard[(f.id, u)]:
                        key = (u, r)
                        new_loads[key] = new_loads.get(key, 0) + q
                        if new_loads[key] > scn.service_capacity(inputs.service(u)):
                            ok = False
                            break
                    if not ok:
                        break
                if ok:
                    assignments(level + 1, new_loads, cost + extra)

        assignments(0, {}, 0.0)
    return best


def random_small_instance(rng: random.Random):
    n = rng.randint(4, 6)
    line = make_line(n, runtime=float(rng.randint(1, 2)))
    s_begin = rng.randint(2, n - 2) if n > 4 else 2
    s_end = rng.randint(s_begin + 1, n - 1)
    t0 = float(rng.randint(30, 60))
    t1 = t0 + float(rng.randint(15, 40))
    services = []
    for k in range(rng.randint(2, 4)):
        direction = rng.choice([0, 1])
        start = float(rng.randint(10, 110))
        services.append(make_service(f"S{k}", direction, start, line))
    open_stations = list(range(1, s_begin + 1)) + list(range(s_end, n + 1))
    flows = []
    for k in range(rng.randint(2, 6)):
        origin = rng.choice(open_stations)
        dest = rng.choice([r for r in range(1, n + 1) if r != origin])
        flows.append(
            make_flow(f"P{k}", origin, dest, float(rng.randint(5, 120)), size=rng.randint(1, 2))
        )
    capacity = rng.choice([2.0, 3.0, 1000.0])
    line = type(line)(
        stations=line.stations,
        turnback_capable=line.turnback_capable,
        section_runtimes=line.section_runtimes,
        dwell_times=line.dwell_times,
        train_capacity=capacity,
        turnback_min=3.0,
    )
    return make_scenario(
        line, services, flows, DisruptionSpec(s_begin, s_end, t0, t1), horizon=(0.0, 200.0)
    )


def test_optimum_matches_enumeration_on_random_instances():
    rng = random.Random(101)
    solved = 0
    while solved < 12:
        scenario = random_small_instance(rng)
        inputs = prepare_stage1(scenario)
        sm = build_stage1(inputs)
        solution = solve_stage1(sm, SolverConfig(engine="embedded"))
        expected = brute_force_stage1(inputs, sm.big_m_objective)
        assert solution.objective == pytest.approx(expected, abs=1e-6)
        solved += 1


# ---------------------------------------------------------------------------
# Worked examples
# ---------------------------------------------------------------------------


def test_no_disruption_keeps_normal_timetable():
    line = make_line(4)
    services = [make_service(f"U{k}", 1, 10.0 + 4 * k, line) for k in range(3)]
    flows = [make_flow("P1", 1, 4, 8.0, size=5)]
    scenario = make_scenario(
        line, services, flows, DisruptionSpec(2, 3, 150.0, 170.0), horizon=(0.0, 200.0)
    )
    inputs = prepare_stage1(scenario)
    assert all(v == 0 for v in inputs.conflict.values())
    solution = solve_stage1(build_stage1(inputs), SolverConfig(engine="embedded"))
    for svc in services:
        out = solution.timetable.outcome(svc.id)
        assert out.activated
        assert out.arrival == pytest.approx(svc.arrival)
        assert out.departure == pytest.approx(svc.departure)
    assert solution.timetable.stats.canceled == {0: 0, 1: 0}


def test_conflicting_positive_train_truncated_at_boundary(toy_scenario):
    inputs = prepare_stage1(toy_scenario)
    assert inputs.conflict["U2"] == 1
    solution = solve_stage1(build_stage1(inputs), SolverConfig(engine="embedded"))
    out = solution.timetable.outcome("U2")
    assert out.activated
    assert out.departure[2] == -1.0
    assert out.arrival[2] == toy_scenario.services[1].arrival[2]
    assert out.arrival[3] == -1.0 and out.arrival[4] == -1.0
    assert out.turn_station == 2


def test_single_flow_single_train_zero_wait():
    line = make_line(3)
    svc = make_service("U1", 1, 20.0, line)
    flow = make_flow("P1", 1, 3, 20.0, size=7)  # produced exactly at pickup
    scenario = make_scenario(
        line, [svc], [flow], DisruptionSpec(1, 2, 150.0, 160.0), horizon=(0.0, 200.0)
    )
    solution = solve_stage1(build_stage1(prepare_stage1(scenario)), SolverConfig(engine="embedded"))
    assert solution.assignment == {("P1", "U1"): 7}
    assert solution.stranded["P1"] == 0
    assert solution.objective == pytest.approx(0.0, abs=1e-9)


def test_capacity_one_strands_overflow():
    line = make_line(3)
    line = type(line)(
        stations=line.stations,
        turnback_capable=line.turnback_capable,
        section_runtimes=line.section_runtimes,
        dwell_times=line.dwell_times,
        train_capacity=1.0,
        turnback_min=3.0,
    )
    svc = make_service("U1", 1, 25.0, line)
    flow = make_flow("P1", 1, 3, 20.0, size=2)
    scenario = make_scenario(
        line, [svc], [flow], DisruptionSpec(1, 2, 150.0, 160.0), horizon=(0.0, 200.0)
    )
    inputs = prepare_stage1(scenario)
    sm = build_stage1(inputs)
    solution = solve_stage1(sm, SolverConfig(engine="embedded"))
    assert solution.assignment == {("P1", "U1"): 1}
    assert solution.stranded["P1"] == 1
    wait = inputs.indicators.board_wait[("P1", "U1")]
    assert solution.objective == pytest.approx(wait + sm.big_m_objective)


# ---------------------------------------------------------------------------
# Stranding-penalty bound (criterion: the penalty theorem)
# ---------------------------------------------------------------------------


def _theorem_instance():
    """One flow with a single feasible train whose wait is the global max (10.5)."""
    line = make_line(3)
    early = make_service("U1", 1, 10.0, line)
    late = make_service("U2", 1, 30.0, line)
    flows = [
        make_flow("P1", 1, 3, 25.0, size=3),  # only the late train, wait 5
        PassengerFlow(id="P2", origin=1, destination=3, production_time=19.5, size=2, direction=1),
    ]
    return make_scenario(
        line, [early, late], flows, DisruptionSpec(1, 2, 150.0, 160.0), horizon=(0.0, 200.0)
    )


def test_penalty_above_max_wait_assigns_everyone():
    scenario = _theorem_instance()
    inputs = prepare_stage1(scenario)
    waits = [inputs.indicators.board_wait[k] for k in admissible_pairs(inputs)]
    assert max(waits) == pytest.approx(10.5)
    sm = build_stage1(inputs, big_m=1.0 + max(waits))
    solution = solve_stage1(sm, SolverConfig(engine="embedded"))
    assert all(q == 0 for q in solution.stranded.values())


def test_penalty_below_max_wait_strands_a_flow():
    scenario = _theorem_instance()
    inputs = prepare_stage1(scenario)
    waits = [inputs.indicators.board_wait[k] for k in admissible_pairs(inputs)]
    sm = build_stage1(inputs, big_m=float(math.floor(max(waits))))  # 10 < 10.5
    solution = solve_stage1(sm, SolverConfig(engine="embedded"))
    assert solution.stranded["P2"] == 2
    assert solution.stranded["P1"] == 0


# ---------------------------------------------------------------------------
# Audits and accumulation identities
# ---------------------------------------------------------------------------


def test_audits_pass_on_random_instances():
    rng = random.Random(211)
    for _ in range(8):
        scenario = random_small_instance(rng)
        inputs = prepare_stage1(scenario)
        solution = solve_stage1(build_stage1(inputs), SolverConfig(engine="embedded"))
        assert audit_disruption(solution.timetable, inputs.area) == []
        assert audit_headways(solution.timetable, scenario.headways, scope="cross") == []
        assert audit_capacity(inputs, solution.assignment) == []
        assert audit_conservation(inputs, solution.assignment, solution.stranded) == []


def test_accumulation_identities(toy_scenario):
    inputs = prepare_stage1(toy_scenario)
    solution = solve_stage1(build_stage1(inputs), SolverConfig(engine="embedded"))
    series = solution.series
    assert np.array_equal(series.stranded, series.arrived - series.departed)
    assert np.all(np.diff(series.arrived, axis=1) >= 0)
    assert np.all(np.diff(series.departed, axis=1) >= 0)
    assert np.all(series.stranded >= -1e-9)
    for r in inputs.area.closed_stations:
        i = series.row(r)
        assert np.all(series.arrived[i] == 0)
        assert np.all(series.departed[i] == 0)
        assert np.all(series.instantaneous[i] == 0)


def test_stranded_terminal_flow_steps_up_and_never_down():
    line = make_line(4)
    svc = make_service("U1", 1, 31.0, line)  # conflicts, truncated at 2
    flow = make_flow("P1", 2, 4, 40.0, size=6)  # produced mid-window at the terminal
    scenario = make_scenario(
        line, [svc], [flow], DisruptionSpec(2, 3, 30.0, 60.0), horizon=(0.0, 100.0)
    )
    inputs = prepare_stage1(scenario)
    solution = solve_stage1(build_stage1(inputs), SolverConfig(engine="embedded"))
    series = solution.series
    i = series.row(2)
    k = series.ticks.index(40)
    assert np.all(series.stranded[i, :k] == 0)
    assert np.all(series.stranded[i, k:] == 6)
    assert series.instantaneous[i, k] == 6


def test_materialized_accumulation_matches_extraction(toy_scenario):
    inputs = prepare_stage1(toy_scenario)
    sm = build_stage1(inputs, materialize_accumulation=True)
    res = solve_milp(sm.model, engine="highs")
    assert res.status == "optimal"
    assignment = {
        key: int(round(res.values[idx])) for key, idx in sm.board.items() if res.values[idx] > 0.5
    }
    stranded = {p: int(round(res.values[idx])) for p, idx in sm.strand.items()}
    series = accumulation_series(inputs, assignment, stranded)
    name_index = res.stats["name_index"]
    for f in toy_scenario.flows:
        for r in inputs.area.open_stations:
            for t in toy_scenario.horizon_minutes[::11]:
                i = series.row(r)
                k = series.ticks.index(t)
                a_model = sum(
                    res.values[name_index[f"A[{g.id},{r},{t}]"]] for g in toy_scenario.flows
                )
                d_model = sum(
                    res.values[name_index[f"D[{g.id},{r},{t}]"]] for g in toy_scenario.flows
                )
                assert a_model == pytest.approx(series.arrived[i, k], abs=1e-6)
                assert d_model == pytest.approx(series.departed[i, k], abs=1e-6)


def test_weight_by_size_switch_changes_objective_scale():
    line = make_line(3)
    svc = make_service("U1", 1, 25.0, line)
    flow = make_flow("P1", 1, 3, 20.0, size=4)
    scenario = make_scenario(
        line, [svc], [flow], DisruptionSpec(1, 2, 150.0, 160.0), horizon=(0.0, 200.0)
    )
    inputs = prepare_stage1(scenario)
    plain = solve_stage1(build_stage1(inputs), SolverConfig(engine="embedded"))
    weighted = solve_stage1(
        build_stage1(inputs, weight_wait_by_size=True), SolverConfig(engine="embedded")
    )
    assert weighted.objective == pytest.approx(plain.objective * 4)


def test_big_m_registry_respects_bounds():
    line = make_line(4)
    scenario = make_scenario(
        line,
        [make_service("U1", 1, 10.0, line)],
        [make_flow("P1", 1, 4, 5.0)],
        DisruptionSpec(2, 3, 30.0, 60.0),
        horizon=(0.0, 120.0),
    )
    inputs = prepare_stage1(scenario)
    sm = build_stage1(inputs)
    waits = [inputs.indicators.board_wait[k] for k in admissible_pairs(inputs)]
    assert sm.big_m_objective >= max(waits)
    assert sm.big_m_time >= scenario.horizon[1]
    assert objective_m(inputs) == pytest.approx(1.0 + max(waits))
