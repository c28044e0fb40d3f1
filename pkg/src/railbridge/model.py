"""Domain types, scenario ingestion and validation for both stages.

All value types are frozen dataclasses: a loaded scenario is immutable and
can be shared freely between threads.  Station visits use the sentinel -1
for "no time at this station" so that constraint generation can mirror the
switching structure of the rescheduling model literally.

Scenario files are JSON with top-level keys ``line``, ``services``,
``flows``, ``disruption``, ``horizon``, ``headways``, ``road``, ``vehicle``
and ``solver``.  Stage-1 times are "HH:MM" strings (internally minutes from
midnight, floats so tests may use sub-minute values); stage-2 quantities are
integer time steps.  ``schema/scenario.schema.json`` documents the format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

NO_VISIT = -1.0


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or cross-referenced."""


def parse_hhmm(text: str) -> float:
    """'HH:MM' -> minutes from midnight."""
    try:
        hh, mm = text.split(":")
        value = int(hh) * 60 + int(mm)
    except Exception as exc:
        raise ScenarioError(f"bad time {text!r}, expected HH:MM") from exc
    if not (0 <= int(hh) <= 47 and 0 <= int(mm) < 60):
        raise ScenarioError(f"bad time {text!r}, expected HH:MM")
    return float(value)


def format_minutes(minutes: float) -> str:
    """Minutes from midnight -> 'HH:MM' (only exact for whole minutes)."""
    m = int(round(minutes))
    return f"{m // 60:02d}:{m % 60:02d}"


# ---------------------------------------------------------------------------
# Line and services
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineTopology:
    """Stations 1..n with section run times and dwell times in minutes.

    ``section_runtimes`` is keyed by directed adjacent pairs (r, r+1) and
    (r, r-1); every adjacent pair must be present in both directions with a
    strictly positive run time.
    """

    stations: tuple[int, ...]
    turnback_capable: frozenset[int]
    section_runtimes: Mapping[tuple[int, int], float]
    dwell_times: Mapping[int, float]
    train_capacity: float = 1000.0
    turnback_min: float = 3.0

    @property
    def n_stations(self) -> int:
        return len(self.stations)


@dataclass(frozen=True)
class TrainService:
    """One directed train run of the normal timetable or a turnaround child.

    ``arrival`` / ``departure`` map every station id to minutes, with -1
    where the service does not call.  ``direction`` is 1 for increasing
    station ids and 0 for decreasing.  ``kind`` is "normal" for timetable
    services and "turnaround" for generated short-turn children.
    """

    id: str
    direction: int
    arrival: Mapping[int, float]
    departure: Mapping[int, float]
    kind: str = "normal"
    capacity: float | None = None

    def visits(self, r: int) -> bool:
        return self.arrival.get(r, NO_VISIT) >= 0 or self.departure.get(r, NO_VISIT) >= 0

    @property
    def visited_stations(self) -> list[int]:
        out = [r for r in self.arrival if self.visits(r)]
        out.sort()
        return out

    @property
    def origin_station(self) -> int:
        stations = self.visited_stations
        if not stations:
            raise ValueError(f"service {self.id} visits no station")
        return stations[0] if self.direction == 1 else stations[-1]

    @property
    def terminus_station(self) -> int:
        stations = self.visited_stations
        return stations[-1] if self.direction == 1 else stations[0]


@dataclass(frozen=True)
class PassengerFlow:
    """An origin-destination passenger group.

    ``direction`` must equal 1 exactly when origin < destination.  The
    mapped origin/destination are filled by task mapping ahead of stage 2
    and stay None until then.
    """

    id: str
    origin: int
    destination: int
    production_time: float
    size: int
    direction: int
    mapped_origin: int | None = None
    mapped_destination: int | None = None

    def with_mapping(self, origin: int, destination: int) -> "PassengerFlow":
        return replace(self, mapped_origin=origin, mapped_destination=destination)


@dataclass(frozen=True)
class DisruptionSpec:
    """Blocked station range and time window, minutes from midnight."""

    station_begin: int
    station_end: int
    time_begin: float
    time_end: float


@dataclass(frozen=True)
class Headways:
    """Minimum event separations in minutes at a shared station."""

    aa: float = 1.0
    ad: float = 1.0
    da: float = 1.0
    dd: float = 1.0


# ---------------------------------------------------------------------------
# Road network and vehicles (stage 2 inputs)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoadSegment:
    id: str
    from_node: str
    to_node: str
    length_m: float
    lanes: int = 1


@dataclass(frozen=True)
class SignalPlan:
    """Fixed time plan of one signalized cell, in time steps."""

    cell: int
    cycle: int
    green: int
    offset: int


@dataclass(frozen=True)
class RoadNetworkSpec:
    segments: tuple[RoadSegment, ...]
    station_anchors: Mapping[int, str]
    signals: tuple[SignalPlan, ...]
    dt_seconds: float = 20.0
    horizon_steps: int | None = None
    holding_weights: Mapping[int, float] | None = None


@dataclass(frozen=True)
class VehicleSpec:
    """Response vehicle fleet parameters shared by every class."""

    capacity: int = 40
    length_m: float = 12.0
    free_flow_mps: float = 20.0
    wave_mps: float = 10.0
    dispatch_period_min: float = 5.0
    max_flow_vph_per_lane: float = 1992.0


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 1e-6
    eps_int: float = 1e-6
    node_limit: int = 200_000
    iter_limit: int = 500_000
    threads: int = 1
    seed: int = 0
    engine: str = "auto"
    weight_wait_by_size: bool = False

    def replace(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# Scenario bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """The single input bundle for a recovery run."""

    line: LineTopology
    services: tuple[TrainService, ...]
    flows: tuple[PassengerFlow, ...]
    disruption: DisruptionSpec
    horizon: tuple[float, float]
    headways: Headways
    road: RoadNetworkSpec
    vehicle: VehicleSpec
    solver: SolverConfig = field(default_factory=SolverConfig)

    @property
    def horizon_minutes(self) -> list[int]:
        lo, hi = self.horizon
        return list(range(int(lo), int(hi) + 1))

    def service_capacity(self, svc: TrainService) -> float:
        return svc.capacity if svc.capacity is not None else self.line.train_capacity


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise ScenarioError(f"missing key {key!r} in {where}")
    return obj[key]


def _load_line(raw: Mapping) -> LineTopology:
    stations = tuple(int(s["id"]) for s in _require(raw, "stations", "line"))
    turnback = frozenset(int(s["id"]) for s in raw["stations"] if s.get("turnback", False))
    runtimes: dict[tuple[int, int], float] = {}
    for sec in _require(raw, "sections", "line"):
        runtimes[(int(sec["from"]), int(sec["to"]))] = float(sec["runtime_min"])
    dwell = {int(k): float(v) for k, v in raw.get("dwell_min", {}).items()}
    for r in stations:
        dwell.setdefault(r, 0.0)
    return LineTopology(
        stations=stations,
        turnback_capable=turnback,
        section_runtimes=runtimes,
        dwell_times=dwell,
        train_capacity=float(raw.get("train_capacity", 1000.0)),
        turnback_min=float(raw.get("turnback_min", 3.0)),
    )


def _load_service(raw: Mapping, station_ids: frozenset[int]) -> TrainService:
    sid = str(_require(raw, "id", "service"))
    arrival: dict[int, float] = {r: NO_VISIT for r in station_ids}
    departure: dict[int, float] = {r: NO_VISIT for r in station_ids}
    for stop in _require(raw, "stops", f"service {sid}"):
        r = int(stop["station"])
        if r not in station_ids:
            raise ScenarioError(f"service {sid} references unknown station {r}")
        arrival[r] = parse_hhmm(stop["arr"])
        departure[r] = parse_hhmm(stop["dep"])
    cap = raw.get("capacity")
    return TrainService(
        id=sid,
        direction=int(_require(raw, "direction", f"service {sid}")),
        arrival=arrival,
        departure=departure,
        capacity=float(cap) if cap is not None else None,
    )


def _load_flow(raw: Mapping, station_ids: frozenset[int]) -> PassengerFlow:
    fid = str(_require(raw, "id", "flow"))
    origin = int(_require(raw, "origin", f"flow {fid}"))
    dest = int(_require(raw, "destination", f"flow {fid}"))
    for r in (origin, dest):
        if r not in station_ids:
            raise ScenarioError(f"flow {fid} references unknown station {r}")
    return PassengerFlow(
        id=fid,
        origin=origin,
        destination=dest,
        production_time=parse_hhmm(_require(raw, "produced", f"flow {fid}")),
        size=int(_require(raw, "size", f"flow {fid}")),
        direction=int(_require(raw, "direction", f"flow {fid}")),
    )


def _load_road(raw: Mapping) -> RoadNetworkSpec:
    segments = tuple(
        RoadSegment(
            id=str(seg["id"]),
            from_node=str(seg["from"]),
            to_node=str(seg["to"]),
            length_m=float(seg["length_m"]),
            lanes=int(seg.get("lanes", 1)),
        )
        for seg in raw.get("segments", [])
    )
    anchors = {int(a["station"]): str(a["node"]) for a in raw.get("station_anchors", [])}
    signals = tuple(
        SignalPlan(
            cell=int(s["cell"]),
            cycle=int(s["cycle"]),
            green=int(s["green"]),
            offset=int(s["offset"]),
        )
        for s in raw.get("signals", [])
    )
    horizon = raw.get("horizon_steps")
    return RoadNetworkSpec(
        segments=segments,
        station_anchors=anchors,
        signals=signals,
        dt_seconds=float(raw.get("dt_seconds", 20.0)),
        horizon_steps=int(horizon) if horizon is not None else None,
    )


def scenario_from_dict(data: Mapping) -> Scenario:
    line = _load_line(_require(data, "line", "scenario"))
    station_ids = frozenset(line.stations)
    services = tuple(_load_service(s, station_ids) for s in _require(data, "services", "scenario"))
    seen: set[str] = set()
    for svc in services:
        if svc.id in seen:
            raise ScenarioError(f"duplicate service id {svc.id}")
        seen.add(svc.id)
    flows = tuple(_load_flow(f, station_ids) for f in _require(data, "flows", "scenario"))
    seen = set()
    for flow in flows:
        if flow.id in seen:
            raise ScenarioError(f"duplicate flow id {flow.id}")
        seen.add(flow.id)
    raw_dis = _require(data, "disruption", "scenario")
    window = _require(raw_dis, "window", "disruption")
    disruption = DisruptionSpec(
        station_begin=int(raw_dis["station_begin"]),
        station_end=int(raw_dis["station_end"]),
        time_begin=parse_hhmm(window[0]),
        time_end=parse_hhmm(window[1]),
    )
    for r in (disruption.station_begin, disruption.station_end):
        if r not in station_ids:
            raise ScenarioError(f"disruption references unknown station {r}")
    raw_hor = _require(data, "horizon", "scenario")
    horizon = (parse_hhmm(raw_hor[0]), parse_hhmm(raw_hor[1]))
    raw_head = _require(data, "headways", "scenario")
    headways = Headways(
        aa=float(raw_head.get("aa", 1.0)),
        ad=float(raw_head.get("ad", 1.0)),
        da=float(raw_head.get("da", 1.0)),
        dd=float(raw_head.get("dd", 1.0)),
    )
    road = _load_road(_require(data, "road", "scenario"))
    raw_veh = _require(data, "vehicle", "scenario")
    vehicle = VehicleSpec(
        capacity=int(raw_veh.get("capacity", 40)),
        length_m=float(raw_veh.get("length_m", 12.0)),
        free_flow_mps=float(raw_veh.get("free_flow_mps", 20.0)),
        wave_mps=float(raw_veh.get("wave_mps", 10.0)),
        dispatch_period_min=float(raw_veh.get("dispatch_period_min", 5.0)),
        max_flow_vph_per_lane=float(raw_veh.get("max_flow_vph_per_lane", 1992.0)),
    )
    raw_solver = data.get("solver", {})
    solver = SolverConfig(
        eps=float(raw_solver.get("eps", 1e-6)),
        eps_int=float(raw_solver.get("eps_int", 1e-6)),
        node_limit=int(raw_solver.get("node_limit", 200_000)),
        iter_limit=int(raw_solver.get("iter_limit", 500_000)),
        threads=int(raw_solver.get("threads", 1)),
        seed=int(raw_solver.get("seed", 0)),
        engine=str(raw_solver.get("engine", "auto")),
        weight_wait_by_size=bool(raw_solver.get("weight_wait_by_size", False)),
    )
    return Scenario(
        line=line,
        services=services,
        flows=flows,
        disruption=disruption,
        horizon=horizon,
        headways=headways,
        road=road,
        vehicle=vehicle,
        solver=solver,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load and cross-reference a scenario file.

    Raises ScenarioError with the offending location for parse failures and
    dangling references.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data)


# ---------------------------------------------------------------------------
# Saving (round-trip partner of load_scenario)
# ---------------------------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict:
    def stops(svc: TrainService) -> list[dict]:
        out = []
        for r in svc.visited_stations:
            out.append(
                {
                    "station": r,
                    "arr": format_minutes(svc.arrival[r]),
                    "dep": format_minutes(svc.departure[r]),
                }
            )
        return out

    return {
        "line": {
            "stations": [
                {"id": r, "turnback": r in s.line.turnback_capable} for r in s.line.stations
            ],
            "sections": [
                {"from": a, "to": b, "runtime_min": rt}
                for (a, b), rt in sorted(s.line.section_runtimes.items())
            ],
            "dwell_min": {str(r): v for r, v in sorted(s.line.dwell_times.items())},
            "train_capacity": s.line.train_capacity,
            "turnback_min": s.line.turnback_min,
        },
        "services": [
            {
                "id": svc.id,
                "direction": svc.direction,
                "stops": stops(svc),
                **({"capacity": svc.capacity} if svc.capacity is not None else {}),
            }
            for svc in s.services
        ],
        "flows": [
            {
                "id": f.id,
                "origin": f.origin,
                "destination": f.destination,
                "produced": format_minutes(f.production_time),
                "size": f.size,
                "direction": f.direction,
            }
            for f in s.flows
        ],
        "disruption": {
            "station_begin": s.disruption.station_begin,
            "station_end": s.disruption.station_end,
            "window": [format_minutes(s.disruption.time_begin), format_minutes(s.disruption.time_end)],
        },
        "horizon": [format_minutes(s.horizon[0]), format_minutes(s.horizon[1])],
        "headways": {"aa": s.headways.aa, "ad": s.headways.ad, "da": s.headways.da, "dd": s.headways.dd},
        "road": {
            "dt_seconds": s.road.dt_seconds,
            **({"horizon_steps": s.road.horizon_steps} if s.road.horizon_steps is not None else {}),
            "segments": [
                {
                    "id": seg.id,
                    "from": seg.from_node,
                    "to": seg.to_node,
                    "length_m": seg.length_m,
                    "lanes": seg.lanes,
                }
                for seg in s.road.segments
            ],
            "station_anchors": [
                {"station": r, "node": node} for r, node in sorted(s.road.station_anchors.items())
            ],
            "signals": [
                {"cell": p.cell, "cycle": p.cycle, "green": p.green, "offset": p.offset}
                for p in s.road.signals
            ],
        },
        "vehicle": {
            "capacity": s.vehicle.capacity,
            "length_m": s.vehicle.length_m,
            "free_flow_mps": s.vehicle.free_flow_mps,
            "wave_mps": s.vehicle.wave_mps,
            "dispatch_period_min": s.vehicle.dispatch_period_min,
            "max_flow_vph_per_lane": s.vehicle.max_flow_vph_per_lane,
        },
        "solver": {
            "eps": s.solver.eps,
            "eps_int": s.solver.eps_int,
            "node_limit": s.solver.node_limit,
            "iter_limit": s.solver.iter_limit,
            "threads": s.solver.threads,
            "seed": s.solver.seed,
            "engine": s.solver.engine,
            "weight_wait_by_size": s.solver.weight_wait_by_size,
        },
    }


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def render(self) -> str:
        return f"E:{self.code}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str) -> None:
        self.violations.append(Violation(code, message))

    def render(self) -> str:
        return "\n".join(v.render() for v in self.violations)


def _check_contiguous(svc: TrainService, report: ValidationReport) -> None:
    stations = svc.visited_stations
    if not stations:
        report.add("SVC_EMPTY", f"service {svc.id} visits no station")
        return
    lo, hi = stations[0], stations[-1]
    if stations != list(range(lo, hi + 1)):
        report.add("SVC_CONTIG", f"service {svc.id} visited stations are not contiguous")


def validate_scenario(s: Scenario) -> ValidationReport:
    """Check every data invariant; violations are report entries, not errors."""
    report = ValidationReport()
    n = s.line.n_stations
    lo, hi = s.horizon

    if list(s.line.stations) != list(range(1, n + 1)):
        report.add("STATION_IDS", "station ids must be consecutive integers starting at 1")
    for a, b in zip(s.line.stations, s.line.stations[1:]):
        for pair in ((a, b), (b, a)):
            rt = s.line.section_runtimes.get(pair)
            if rt is None:
                report.add("SECTION_RUNTIME", f"missing run time for section {pair}")
            elif rt <= 0:
                report.add("SECTION_RUNTIME", f"non-positive run time for section {pair}")

    for svc in s.services:
        _check_contiguous(svc, report)
        for r in s.line.stations:
            arr, dep = svc.arrival.get(r, NO_VISIT), svc.departure.get(r, NO_VISIT)
            visited = arr >= 0 or dep >= 0
            if visited and (arr < 0 or dep < 0):
                report.add(
                    "SVC_SENTINEL",
                    f"service {svc.id} station {r}: arrival and departure must both be set or both -1",
                )
            if visited and arr >= 0 and dep >= 0 and arr > dep:
                report.add(
                    "SVC_TIME_ORDER",
                    f"service {svc.id} station {r}: arrival {arr:g} after departure {dep:g}",
                )
            if visited:
                for t in (arr, dep):
                    if t >= 0 and not (lo <= t <= hi):
                        report.add(
                            "HORIZON",
                            f"service {svc.id} station {r}: time {t:g} outside horizon",
                        )

    for flow in s.flows:
        if flow.size < 1:
            report.add("FLOW_SIZE", f"flow {flow.id}: size must be at least 1")
        if flow.origin == flow.destination:
            report.add("FLOW_OD", f"flow {flow.id}: origin equals destination")
        expected_dir = 1 if flow.origin < flow.destination else 0
        if flow.direction != expected_dir:
            report.add(
                "FLOW_DIR",
                f"flow {flow.id}: direction {flow.direction} inconsistent with OD "
                f"({flow.origin},{flow.destination})",
            )
        if not (lo <= flow.production_time <= hi):
            report.add("HORIZON", f"flow {flow.id}: production time outside horizon")

    d = s.disruption
    if not (1 <= d.station_begin < d.station_end <= n):
        report.add("DISRUPT_RANGE", "disruption stations must satisfy 1 <= begin < end <= n")
    if not (d.time_begin < d.time_end):
        report.add("DISRUPT_RANGE", "disruption window must have begin < end")
    if not (lo <= d.time_begin and d.time_end <= hi):
        report.add("DISRUPT_RANGE", "disruption window outside horizon")

    return report


def station_names(scenario: Scenario) -> Sequence[int]:
    return scenario.line.stations
