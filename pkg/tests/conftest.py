"""Shared builders for scenarios, services and road corridors."""

from __future__ import annotations

from pathlib import Path

import pytest

from railbridge.model import (
    DisruptionSpec,
    Headways,
    LineTopology,
    PassengerFlow,
    RoadNetworkSpec,
    RoadSegment,
    Scenario,
    SignalPlan,
    SolverConfig,
    TrainService,
    VehicleSpec,
)

NO_VISIT = -1.0


def make_line(n: int, runtime: float = 2.0, dwell: float = 0.0, turnback=None) -> LineTopology:
    runtimes = {}
    for r in range(1, n):
        runtimes[(r, r + 1)] = runtime
        runtimes[(r + 1, r)] = runtime
    return LineTopology(
        stations=tuple(range(1, n + 1)),
        turnback_capable=frozenset(turnback if turnback is not None else range(1, n + 1)),
        section_runtimes=runtimes,
        dwell_times={r: dwell for r in range(1, n + 1)},
    )


def make_service(
    sid: str,
    direction: int,
    start: float,
    line: LineTopology,
    first: int | None = None,
    last: int | None = None,
) -> TrainService:
    """Full-line (or partial) run with arr == dep at every stop."""
    n = line.n_stations
    if direction == 1:
        lo, hi = (first or 1), (last or n)
        path = range(lo, hi + 1)
    else:
        lo, hi = (last or 1), (first or n)
        path = range(hi, lo - 1, -1)
    arr = {r: NO_VISIT for r in range(1, n + 1)}
    dep = {r: NO_VISIT for r in range(1, n + 1)}
    t = start
    prev = None
    for r in path:
        if prev is not None:
            t += line.section_runtimes[(prev, r)]
        arr[r] = t
        t += line.dwell_times.get(r, 0.0)
        dep[r] = t
        prev = r
    return TrainService(id=sid, direction=direction, arrival=arr, departure=dep)


def make_flow(
    fid: str, origin: int, dest: int, produced: float, size: int = 10
) -> PassengerFlow:
    return PassengerFlow(
        id=fid,
        origin=origin,
        destination=dest,
        production_time=produced,
        size=size,
        direction=1 if origin < dest else 0,
    )


def corridor_road(n_segments: int = 3, length_m: float = 400.0, signals=(), anchors=None) -> RoadNetworkSpec:
    segments = tuple(
        RoadSegment(id=f"s{k}", from_node=f"n{k}", to_node=f"n{k + 1}", length_m=length_m)
        for k in range(n_segments)
    )
    return RoadNetworkSpec(
        segments=segments,
        station_anchors=anchors or {},
        signals=tuple(SignalPlan(**s) if isinstance(s, dict) else s for s in signals),
        dt_seconds=20.0,
    )


def make_scenario(
    line: LineTopology,
    services,
    flows,
    disruption: DisruptionSpec,
    horizon: tuple[float, float],
    road: RoadNetworkSpec | None = None,
    vehicle: VehicleSpec | None = None,
    headways: Headways | None = None,
    solver: SolverConfig | None = None,
) -> Scenario:
    return Scenario(
        line=line,
        services=tuple(services),
        flows=tuple(flows),
        disruption=disruption,
        horizon=horizon,
        headways=headways or Headways(),
        road=road or corridor_road(anchors={1: "n0", 2: "n3"}),
        vehicle=vehicle or VehicleSpec(),
        solver=solver or SolverConfig(),
    )


@pytest.fixture
def toy_scenario() -> Scenario:
    """4 stations, disruption on sections (2,3) during [30, 60)."""
    line = make_line(4)
    services = [
        make_service("U1", 1, 10.0, line),
        make_service("U2", 1, 40.0, line),
        make_service("D1", 0, 12.0, line),
    ]
    flows = [
        make_flow("P1", 1, 4, 5.0, size=8),
        make_flow("P2", 1, 2, 35.0, size=5),
        make_flow("P3", 4, 1, 6.0, size=6),
    ]
    disruption = DisruptionSpec(station_begin=2, station_end=3, time_begin=30.0, time_end=60.0)
    return make_scenario(line, services, flows, disruption, horizon=(0.0, 120.0))


CASE_SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "case_line13.json"
