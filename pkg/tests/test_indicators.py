"""Indicator-set construction: uniqueness, weak uniqueness and dominance."""

from __future__ import annotations

import random

from railbridge.disruption import build_area, dump_indicators_csv
from railbridge.model import DisruptionSpec
from railbridge.reschedule import prepare_stage1

from conftest import make_flow, make_line, make_scenario, make_service


def random_stage1_scenario(rng: random.Random, n_services=6, n_flows=8):
    """Fuzz scenario with flow origins restricted to the operational area."""
    n = rng.randint(6, 13)
    line = make_line(n, runtime=float(rng.randint(1, 3)))
    s_begin = rng.randint(2, n - 2)
    s_end = rng.randint(s_begin + 1, n - 1)
    t0 = float(rng.randint(200, 300))
    t1 = t0 + float(rng.randint(20, 60))
    services = []
    for k in range(n_services):
        direction = rng.choice([0, 1])
        start = float(rng.randint(120, 400))
        services.append(make_service(f"S{k}", direction, start, line))
    area_stations = list(range(1, s_begin + 1)) + list(range(s_end, n + 1))
    flows = []
    for k in range(n_flows):
        origin = rng.choice(area_stations)
        dest = rng.choice([r for r in range(1, n + 1) if r != origin])
        flows.append(
            make_flow(f"P{k}", origin, dest, float(rng.randint(100, 440)), size=rng.randint(1, 9))
        )
    scenario = make_scenario(
        line,
        services,
        flows,
        DisruptionSpec(s_begin, s_end, t0, t1),
        horizon=(0.0, 500.0),
    )
    return scenario


def dense_property_sums(inputs):
    """Exhaustive grid sums of the instantaneous indicators."""
    ind = inputs.indicators
    ticks = inputs.scenario.horizon_minutes
    open_stations = inputs.area.open_stations
    arrival_sum = {}
    transfer_sum = {}
    for p in ind.flow_ids:
        arrival_sum[p] = sum(
            ind.arrival_inst(p, r, t) for r in open_stations for t in ticks
        )
        for u in ind.service_ids:
            transfer_sum[(p, u)] = sum(
                ind.transfer_inst(p, u, r, t) for r in open_stations for t in ticks
            )
    return arrival_sum, transfer_sum


def test_arrival_indicator_has_single_point():
    line = make_line(5)
    scenario = make_scenario(
        line,
        [make_service("U1", 1, 10.0, line)],
        [make_flow("P1", 2, 5, 25.0)],
        DisruptionSpec(2, 4, 30.0, 60.0),
        horizon=(0.0, 100.0),
    )
    inputs = prepare_stage1(scenario)
    arrival_sum, _ = dense_property_sums(inputs)
    assert arrival_sum["P1"] == 1
    assert inputs.indicators.arrival_inst("P1", 2, 25.0) == 1
    assert inputs.indicators.arrival_acc("P1", 2, 99.0) == 1
    assert inputs.indicators.arrival_acc("P1", 2, 24.0) == 0


def test_transfer_fires_once_at_terminal_arrival():
    line = make_line(7)
    svc = make_service("U1", 1, 28.0, line)  # station 3 at 32: conflicts
    flow = make_flow("P1", 1, 7, 20.0)
    scenario = make_scenario(
        line,
        [svc],
        [flow],
        DisruptionSpec(3, 5, 30.0, 90.0),
        horizon=(0.0, 150.0),
    )
    inputs = prepare_stage1(scenario)
    ind = inputs.indicators
    t_at_3 = svc.arrival[3]
    assert ind.transfer_point[("P1", "U1")].station == 3
    assert ind.transfer_point[("P1", "U1")].time == t_at_3
    assert ind.transfer_inst("P1", "U1", 3, t_at_3) == 1
    assert ind.transfer_acc("P1", "U1", 3, t_at_3 + 40.0) == 1
    assert ind.transfer_acc("P1", "U1", 3, t_at_3 - 1.0) == 0


def test_no_transfer_when_boarding_at_terminal():
    line = make_line(7)
    svc = make_service("U1", 1, 28.0, line)
    flow = make_flow("P1", 3, 6, 20.0)  # boards at the boundary itself
    scenario = make_scenario(
        line, [svc], [flow], DisruptionSpec(3, 5, 30.0, 90.0), horizon=(0.0, 150.0)
    )
    inputs = prepare_stage1(scenario)
    assert ("P1", "U1") not in inputs.indicators.transfer_point


def test_linkage_only_for_conflicting_parents_at_boundary():
    rng = random.Random(23)
    for _ in range(20):
        scenario = random_stage1_scenario(rng)
        inputs = prepare_stage1(scenario)
        for (parent_id, _child_id), turn in inputs.linkage.items():
            assert inputs.conflict[parent_id] == 1
            parent = inputs.service(parent_id)
            assert turn == inputs.area.boundary_for_direction(parent.direction)


def test_property_sums_on_fuzzed_scenarios():
    rng = random.Random(31)
    for _ in range(30):
        scenario = random_stage1_scenario(rng, n_services=4, n_flows=5)
        inputs = prepare_stage1(scenario)
        arrival_sum, transfer_sum = dense_property_sums(inputs)
        for p, total in arrival_sum.items():
            assert total == 1, f"flow {p} arrival multiplicity {total}"
        for key, total in transfer_sum.items():
            assert total <= 1, f"pair {key} transfer multiplicity {total}"


def test_instantaneous_dominated_by_accumulated():
    rng = random.Random(37)
    for _ in range(10):
        scenario = random_stage1_scenario(rng, n_services=3, n_flows=4)
        inputs = prepare_stage1(scenario)
        ind = inputs.indicators
        ticks = scenario.horizon_minutes[::7]
        for p in ind.flow_ids:
            pt = ind.origin_point[p]
            for t in ticks:
                assert ind.arrival_inst(p, pt.station, t) <= ind.arrival_acc(p, pt.station, t)
        for (p, u), pt in ind.transfer_point.items():
            for t in ticks:
                assert ind.transfer_inst(p, u, pt.station, t) <= ind.transfer_acc(
                    p, u, pt.station, t
                )


def test_transfer_entries_only_for_conflicting_normals():
    rng = random.Random(41)
    for _ in range(15):
        scenario = random_stage1_scenario(rng)
        inputs = prepare_stage1(scenario)
        children = {c.id for c in inputs.children}
        for (p, u), pt in inputs.indicators.transfer_point.items():
            assert u not in children
            assert inputs.conflict[u] == 1
            flow = next(f for f in scenario.flows if f.id == p)
            assert pt.station == inputs.area.boundary_for_direction(flow.direction)
            assert pt.station != flow.origin


def test_board_wait_against_candidates():
    line = make_line(5)
    svc = make_service("U1", 1, 10.0, line)
    flow = make_flow("P1", 2, 4, 5.0)
    scenario = make_scenario(
        line, [svc], [flow], DisruptionSpec(3, 4, 60.0, 90.0), horizon=(0.0, 150.0)
    )
    inputs = prepare_stage1(scenario)
    ind = inputs.indicators
    assert ind.board_wait[("P1", "U1")] == svc.arrival[2] - 5.0
    assert ind.wait_ok[("P1", "U1")] == 1
    assert ind.direction_ok[("P1", "U1")] == 1


def test_indicator_dump_is_sparse_csv():
    line = make_line(5)
    scenario = make_scenario(
        line,
        [make_service("U1", 1, 10.0, line)],
        [make_flow("P1", 1, 5, 5.0)],
        DisruptionSpec(2, 4, 30.0, 60.0),
        horizon=(0.0, 100.0),
    )
    inputs = prepare_stage1(scenario)
    dump = dump_indicators_csv(inputs.indicators)
    assert dump.splitlines()[0] == "p,u,r,t,kind,value"
    assert any(",arrival," in line for line in dump.splitlines())
