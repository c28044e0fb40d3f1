"""Cell network construction, signals, assignment LP and fixed-route baseline."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from railbridge.ctm.baseline import (
    BaselineError,
    min_hop_route,
    shortest_path_baseline,
    simulate_fixed_routes,
)
from railbridge.ctm.network import (
    Cell,
    CellNetwork,
    NetworkError,
    ORDINARY,
    SINK,
    SOURCE,
    bind_classes,
    build_network,
)
from railbridge.ctm.sodta import (
    ClassDemand,
    SodtaInfeasible,
    UnreachableError,
    audit_arrivals,
    audit_conservation,
    audit_red_outflow,
    auto_horizon,
    build_sodta,
    check_reachability,
    solve_sodta,
)
from railbridge.mapping import VehicleClass
from railbridge.model import RoadNetworkSpec, RoadSegment, SignalPlan, VehicleSpec


VEHICLE = VehicleSpec()  # 20 m/s, 10 m/s wave, 1992 vph/lane, 20 s steps


def spec(segments, anchors=None, signals=()):
    return RoadNetworkSpec(
        segments=tuple(segments),
        station_anchors=anchors or {},
        signals=tuple(signals),
        dt_seconds=20.0,
    )


def corridor_net(n_cells: int, q: float = 100.0, jam: float = 1000.0) -> CellNetwork:
    """Hand-built source -> n cells -> sink chain for LP-level tests."""
    net = CellNetwork(dt_seconds=20.0, free_flow_mps=20.0, wave_mps=10.0)
    src, snk = n_cells + 1, n_cells + 2
    for cid in range(1, n_cells + 1):
        net.cells[cid] = Cell(cid, ORDINARY, 400.0)
        net.successors[cid] = []
        net.predecessors[cid] = []
        net.q_base[cid] = q
        net.n_jam[cid] = jam
    net.cells[src] = Cell(src, SOURCE, station=1)
    net.cells[snk] = Cell(snk, SINK, station=2)
    net.successors[src] = []
    net.predecessors[src] = []
    net.successors[snk] = []
    net.predecessors[snk] = []
    net.source_of_station[1] = src
    net.sink_of_station[2] = snk
    net.add_connector(src, 1)
    for cid in range(1, n_cells):
        net.add_connector(cid, cid + 1)
    net.add_connector(n_cells, snk)
    return net


# ---------------------------------------------------------------------------
# Construction constants
# ---------------------------------------------------------------------------


def test_fundamental_diagram_constants():
    net = build_network(
        spec([RoadSegment("s0", "a", "b", 400.0)], anchors={1: "a", 2: "b"}),
        VEHICLE,
        source_stations=[1],
        sink_stations=[2],
    )
    assert net.cell_length_m == 400.0
    ordinary = net.ordinary_cells()
    assert len(ordinary) == 1
    assert net.q_base[ordinary[0]] == 11.0
    assert net.n_jam[ordinary[0]] == 33.0


def test_single_segment_has_source_and_sink_attached():
    net = build_network(
        spec([RoadSegment("s0", "a", "b", 400.0)], anchors={1: "a", 2: "b"}),
        VEHICLE,
        [1],
        [2],
    )
    src = net.source_of_station[1]
    snk = net.sink_of_station[2]
    assert net.cells[src].kind == SOURCE and net.cells[snk].kind == SINK
    assert net.successors[src] == [1]
    assert net.predecessors[snk] == [1]


def test_segment_discretization_ceils():
    net = build_network(
        spec([RoadSegment("s0", "a", "b", 1000.0)], anchors={1: "a", 2: "b"}), VEHICLE, [1], [2]
    )
    assert len(net.ordinary_cells()) == 3  # ceil(1000 / 400)


def test_short_segment_merges_forward_with_warning():
    segments = [
        RoadSegment("tiny", "a", "b", 120.0),
        RoadSegment("main", "b", "c", 800.0),
    ]
    with pytest.warns(UserWarning, match="tiny"):
        net = build_network(spec(segments, anchors={1: "a", 2: "c"}), VEHICLE, [1], [2])
    # 920 m merged: 3 cells, entry node aliased
    assert len(net.ordinary_cells()) == 3
    assert net.successors[net.source_of_station[1]] == [1]


def test_signal_plan_on_unknown_cell_rejected():
    with pytest.raises(NetworkError, match="99"):
        build_network(
            spec(
                [RoadSegment("s0", "a", "b", 400.0)],
                anchors={1: "a", 2: "b"},
                signals=[SignalPlan(cell=99, cycle=5, green=2, offset=0)],
            ),
            VEHICLE,
            [1],
            [2],
        )


# ---------------------------------------------------------------------------
# Signal timing
# ---------------------------------------------------------------------------


def test_signal_green_windows():
    net = corridor_net(3)
    net.signals[2] = SignalPlan(cell=2, cycle=5, green=2, offset=0)
    greens = [t for t in range(10) if net.is_green(2, t)]
    assert greens == [0, 1, 5, 6]
    assert net.outflow_capacity(2, 2) == 0.0
    assert net.outflow_capacity(2, 5) == net.q_base[2]


def test_signal_offset_shifts_first_green():
    net = corridor_net(3)
    net.signals[2] = SignalPlan(cell=2, cycle=5, green=2, offset=4)
    greens = [t for t in range(12) if net.is_green(2, t)]
    assert greens[0] == 4 and greens == [4, 5, 9, 10]


def test_degenerate_all_green_signal():
    net = corridor_net(3)
    net.signals[2] = SignalPlan(cell=2, cycle=5, green=5, offset=0)
    assert all(net.is_green(2, t) for t in range(20))


# ---------------------------------------------------------------------------
# Assignment LP
# ---------------------------------------------------------------------------


def solve_corridor(net, injections, horizon=None, engine="embedded"):
    demands = [ClassDemand(1, net.source_of_station[1], net.sink_of_station[2], injections)]
    model, idx = build_sodta(net, demands, horizon_steps=horizon)
    return solve_sodta(model, idx, net, engine=engine), idx, demands


def test_zero_demand_gives_zero_travel_time():
    net = corridor_net(3)
    sol, _idx, _dem = solve_corridor(net, [], horizon=6)
    assert sol.objective_steps == pytest.approx(0.0, abs=1e-9)
    assert sol.occupancy == {}


def test_single_vehicle_free_flow_hand_stepped():
    net = corridor_net(3)
    sol, idx, demands = solve_corridor(net, [(0, 1)], horizon=8)
    # hand-stepped: source at t=1, cells 1..3 at t=2..4, sink inflow at t=4
    assert sol.objective_steps == pytest.approx(4.0, abs=1e-7)
    assert sol.nct_min[1] == pytest.approx(4 * 20 / 60.0)
    assert sol.curves[1][3] == pytest.approx(0.0, abs=1e-9)
    assert sol.curves[1][4] == pytest.approx(1.0)
    src = net.source_of_station[1]
    assert sol.occupancy.get((src, 1, 1), 0.0) == pytest.approx(1.0)
    assert sol.occupancy.get((1, 1, 2), 0.0) == pytest.approx(1.0)
    assert sol.occupancy.get((3, 1, 4), 0.0) == pytest.approx(1.0)


def test_bottleneck_delays_second_vehicle_one_step():
    net = corridor_net(2)
    net.q_base[1] = 1.0  # bottleneck at the first road cell
    sol, _idx, _dem = solve_corridor(net, [(0, 2)], horizon=10)
    # unconstrained: both clear with 6 vehicle-steps; the cap adds exactly one
    assert sol.objective_steps == pytest.approx(7.0, abs=1e-7)
    assert sol.curves[1][3] == pytest.approx(1.0)
    assert sol.curves[1][4] == pytest.approx(2.0)


def test_unreachable_sink_is_a_precheck_error():
    net = corridor_net(3)
    net.signals[2] = SignalPlan(cell=2, cycle=5, green=0, offset=0)  # permanently red
    demands = [ClassDemand(1, net.source_of_station[1], net.sink_of_station[2], [(0, 1)])]
    with pytest.raises(UnreachableError):
        build_sodta(net, demands, horizon_steps=10)


def test_too_short_horizon_is_reported():
    net = corridor_net(3)
    demands = [ClassDemand(1, net.source_of_station[1], net.sink_of_station[2], [(0, 1)])]
    model, idx = build_sodta(net, demands, horizon_steps=3)
    with pytest.raises(SodtaInfeasible):
        solve_sodta(model, idx, net, engine="embedded")


def test_conservation_and_balance_audits():
    rng = random.Random(5)
    for _ in range(5):
        n = rng.randint(2, 5)
        net = corridor_net(n)
        injections = [(k, rng.randint(1, 4)) for k in range(0, rng.randint(1, 4))]
        sol, idx, _dem = solve_corridor(net, injections, horizon=n + 12)
        assert audit_conservation(sol, idx, net) <= 1e-6
        assert audit_arrivals(sol) == []


def test_free_flow_equivalence_on_random_corridors():
    rng = random.Random(9)
    for trial in range(10):
        n = rng.randint(2, 6)
        net = corridor_net(n, q=50.0, jam=500.0)
        injections = [(k, rng.randint(1, 3)) for k in range(0, rng.randint(1, 5))]
        horizon = n + max(k for k, _v in injections) + 6
        sol, idx, demands = solve_corridor(net, injections, horizon=horizon)
        route = min_hop_route(net, demands[0].source, demands[0].sink)
        sim = simulate_fixed_routes(net, demands, {1: route}, record_occupancy=True)
        assert sim.ttt_steps == pytest.approx(sol.objective_steps, abs=1e-6)
        for (cell, m, t), q in sim.occupancy.items():
            assert sol.occupancy.get((cell, m, t), 0.0) == pytest.approx(q, abs=1e-6), (
                trial,
                cell,
                t,
            )
        for (cell, m, t), q in sol.occupancy.items():
            if t <= sim.steps_run:
                assert sim.occupancy.get((cell, m, t), 0.0) == pytest.approx(q, abs=1e-6)


def test_red_steps_have_zero_outflow():
    # three signalized cells with the fixed plans (cycle 5, green 2, offsets 0/0/4)
    net = corridor_net(12, q=11.0, jam=33.0)
    net.signals[3] = SignalPlan(cell=3, cycle=5, green=2, offset=0)
    net.signals[4] = SignalPlan(cell=4, cycle=5, green=2, offset=0)
    net.signals[11] = SignalPlan(cell=11, cycle=5, green=2, offset=4)
    sol, idx, _dem = solve_corridor(net, [(0, 6), (3, 6)], horizon=60, engine="auto")
    assert audit_red_outflow(sol, net) == 0.0
    assert audit_conservation(sol, idx, net) <= 1e-6


# ---------------------------------------------------------------------------
# Baseline dominance
# ---------------------------------------------------------------------------


def two_route_net(short_q: float = 1.0) -> CellNetwork:
    """source -> (A) -> sink versus source -> B1 -> B2 -> sink."""
    net = CellNetwork(dt_seconds=20.0, free_flow_mps=20.0, wave_mps=10.0)
    cells = {1: ORDINARY, 2: ORDINARY, 3: ORDINARY, 4: SOURCE, 5: SINK}
    for cid, kind in cells.items():
        net.cells[cid] = Cell(cid, kind, 400.0 if kind == ORDINARY else 0.0,
                              station=1 if kind == SOURCE else 2 if kind == SINK else None)
        net.successors[cid] = []
        net.predecessors[cid] = []
        if kind == ORDINARY:
            net.q_base[cid] = 100.0
            net.n_jam[cid] = 1000.0
    net.q_base[1] = short_q
    net.source_of_station[1] = 4
    net.sink_of_station[2] = 5
    net.add_connector(4, 1)  # short route: one cell
    net.add_connector(1, 5)
    net.add_connector(4, 2)  # long route: two cells
    net.add_connector(2, 3)
    net.add_connector(3, 5)
    return net


def test_uncongested_single_vehicle_baseline_equals_assignment():
    net = corridor_net(3)
    demands = [ClassDemand(1, net.source_of_station[1], net.sink_of_station[2], [(0, 1)])]
    model, idx = build_sodta(net, demands, horizon_steps=8)
    sol = solve_sodta(model, idx, net, engine="embedded")
    base, _routes = shortest_path_baseline(net, demands)
    assert base.ttt_steps == pytest.approx(sol.objective_steps, abs=1e-7)


def test_congested_two_route_strict_improvement():
    net = two_route_net(short_q=1.0)
    demands = [ClassDemand(1, 4, 5, [(0, 6)])]
    model, idx = build_sodta(net, demands, horizon_steps=16)
    sol = solve_sodta(model, idx, net, engine="embedded")
    base, routes = shortest_path_baseline(net, demands)
    assert routes[1] == [4, 1, 5]  # min-hop picks the short route
    assert sol.objective_steps < base.ttt_steps - 1e-6


def test_assignment_never_beats_itself_on_random_networks():
    rng = random.Random(33)
    for trial in range(20):
        short_q = rng.choice([1.0, 2.0, 3.0, 100.0])
        net = two_route_net(short_q=short_q)
        n_veh = rng.randint(1, 8)
        steps = sorted(rng.sample(range(0, 6), k=rng.randint(1, 3)))
        injections = [(s, max(1, n_veh // len(steps))) for s in steps]
        demands = [ClassDemand(1, 4, 5, injections)]
        model, idx = build_sodta(net, demands)
        sol = solve_sodta(model, idx, net, engine="embedded")
        base, _routes = shortest_path_baseline(net, demands)
        assert sol.objective_steps <= base.ttt_steps + 1e-6, trial


def test_disconnected_fixed_route_is_an_error():
    net = two_route_net()
    demands = [ClassDemand(1, 4, 5, [(0, 1)])]
    with pytest.raises(BaselineError, match="disconnected"):
        simulate_fixed_routes(net, demands, {1: [4, 3, 5]})


def test_bind_classes_requires_road_cells():
    net = corridor_net(2)
    with pytest.raises(NetworkError):
        bind_classes(net, [VehicleClass(1, 7, 9)])
    assert bind_classes(net, [VehicleClass(1, 1, 2)]) == {
        1: (net.source_of_station[1], net.sink_of_station[2])
    }
