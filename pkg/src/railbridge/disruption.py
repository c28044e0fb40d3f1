"""Disruption geometry, conflict detection and indicator precomputation.

Everything the rescheduling MILP consumes as a parameter is derived here:
the spatio-temporal disruption area and its per-section units, the per
service conflict flag, the service classification, synthesized turnaround
candidates with their precomputed times, onboard rows, pairwise headway
incompatibilities and the sparse arrival/transfer/departure indicators used
by the accumulation measurement.

All functions are pure over immutable scenario data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .model import (
    NO_VISIT,
    DisruptionSpec,
    Headways,
    LineTopology,
    PassengerFlow,
    TrainService,
)


class TurnaroundError(ValueError):
    """Raised when no turnback-capable station exists on a disruption boundary."""


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisruptionUnit:
    """One blocked track section crossed with the disruption window."""

    section: tuple[int, int]
    time_begin: float
    time_end: float


@dataclass(frozen=True)
class SpatioTemporalArea:
    """Blocked rectangle in the time-space diagram plus its section units."""

    station_begin: int
    station_end: int
    time_begin: float
    time_end: float
    n_stations: int
    units: tuple[DisruptionUnit, ...]

    @property
    def area_stations(self) -> range:
        return range(self.station_begin, self.station_end + 1)

    @property
    def ms1(self) -> range:
        """Operational area on the low-id side, boundary terminal included."""
        return range(1, self.station_begin + 1)

    @property
    def ms2(self) -> range:
        return range(self.station_end, self.n_stations + 1)

    @property
    def open_stations(self) -> list[int]:
        return list(self.ms1) + list(self.ms2)

    @property
    def closed_stations(self) -> list[int]:
        return list(range(self.station_begin + 1, self.station_end))

    @property
    def terminal1(self) -> int:
        return self.station_begin

    @property
    def terminal2(self) -> int:
        return self.station_end

    def boundary_for_direction(self, direction: int) -> int:
        """Terminal where a crossing trip in this direction is cut."""
        return self.terminal1 if direction == 1 else self.terminal2


def build_area(d: DisruptionSpec, line: LineTopology) -> SpatioTemporalArea:
    """One unit per disrupted section; their union is the full rectangle."""
    n = line.n_stations
    if not (1 <= d.station_begin < d.station_end <= n):
        raise ValueError(
            f"disruption stations ({d.station_begin},{d.station_end}) invalid for a {n}-station line"
        )
    if not (d.time_begin < d.time_end):
        raise ValueError("disruption window must have begin < end")
    units = tuple(
        DisruptionUnit(section=(r, r + 1), time_begin=d.time_begin, time_end=d.time_end)
        for r in range(d.station_begin, d.station_end)
    )
    return SpatioTemporalArea(
        station_begin=d.station_begin,
        station_end=d.station_end,
        time_begin=d.time_begin,
        time_end=d.time_end,
        n_stations=n,
        units=units,
    )


# ---------------------------------------------------------------------------
# Conflict detection and classification
# ---------------------------------------------------------------------------


def detect_conflict(svc: TrainService, area: SpatioTemporalArea) -> int:
    """1 iff any station time of svc inside the area lies strictly within the window.

    The test is the open interval (time_begin, time_end): an event exactly on
    the boundary does not conflict.  Unvisited stations carry -1 and never
    trigger.
    """
    for r in area.area_stations:
        for t in (svc.arrival.get(r, NO_VISIT), svc.departure.get(r, NO_VISIT)):
            if area.time_begin < t < area.time_end:
                return 1
    return 0


@dataclass(frozen=True)
class ServicePartition:
    """Normal services split by their relation to the disruption window."""

    before: tuple[TrainService, ...]
    during: tuple[TrainService, ...]
    after: tuple[TrainService, ...]


def classify_services(
    services: Iterable[TrainService], area: SpatioTemporalArea
) -> ServicePartition:
    """Partition the normal services.

    Non-conflicting services go to ``after`` when their origin-station times
    fall past the window end, to ``before`` when ahead of the window start,
    and otherwise to ``during``.  Every conflicting service goes to
    ``during``.
    """
    before: list[TrainService] = []
    during: list[TrainService] = []
    after: list[TrainService] = []
    for svc in services:
        if detect_conflict(svc, area):
            during.append(svc)
            continue
        origin = svc.origin_station
        arr = svc.arrival.get(origin, NO_VISIT)
        dep = svc.departure.get(origin, NO_VISIT)
        if arr > area.time_end or dep > area.time_end:
            after.append(svc)
        elif (0 <= arr < area.time_begin) or (0 <= dep < area.time_begin):
            before.append(svc)
        else:
            during.append(svc)
    return ServicePartition(before=tuple(before), during=tuple(during), after=tuple(after))


# ---------------------------------------------------------------------------
# Candidate timetable (truncation) and turnaround generation
# ---------------------------------------------------------------------------

TimePair = tuple[dict[int, float], dict[int, float]]


def truncated_times(svc: TrainService, area: SpatioTemporalArea) -> TimePair:
    """Candidate times of a conflicting service: kept up to the boundary.

    Positive services keep their times inside the low-side operational area,
    keep the arrival at the boundary terminal but lose its departure, and
    drop everything past the boundary; negative services mirror this on the
    high side.
    """
    arr: dict[int, float] = {}
    dep: dict[int, float] = {}
    if svc.direction == 1:
        kept, terminal = area.ms1, area.terminal1
    else:
        kept, terminal = area.ms2, area.terminal2
    kept_set = set(kept)
    for r in range(1, area.n_stations + 1):
        if r in kept_set:
            arr[r] = svc.arrival.get(r, NO_VISIT)
            dep[r] = NO_VISIT if r == terminal else svc.departure.get(r, NO_VISIT)
        else:
            arr[r] = NO_VISIT
            dep[r] = NO_VISIT
    return arr, dep


def candidate_times(
    svc: TrainService, area: SpatioTemporalArea, conflict: int
) -> TimePair:
    if conflict:
        return truncated_times(svc, area)
    return dict(svc.arrival), dict(svc.departure)


def generate_turnarounds(
    services: Iterable[TrainService],
    area: SpatioTemporalArea,
    line: LineTopology,
) -> tuple[tuple[TrainService, ...], dict[tuple[str, str], int]]:
    """Synthesize one turnaround candidate per conflicting normal service.

    The child departs from the boundary terminal of the parent's direction,
    ``turnback_min`` minutes after the parent's arrival there, runs in the
    reverse direction all the way to the line terminal using the section run
    times and dwell times, and is linked to its parent through the returned
    ``linkage`` map ``(parent_id, child_id) -> turn station``.

    A conflicting parent that never reaches the boundary terminal in the
    normal timetable gets no child.  A boundary terminal that is not
    turnback capable raises TurnaroundError.
    """
    children: list[TrainService] = []
    linkage: dict[tuple[str, str], int] = {}
    n = area.n_stations
    for svc in services:
        if not detect_conflict(svc, area):
            continue
        turn = area.boundary_for_direction(svc.direction)
        if turn not in line.turnback_capable:
            raise TurnaroundError(
                f"boundary station {turn} is not turnback capable; "
                f"cannot turn service {svc.id}"
            )
        parent_arrival = svc.arrival.get(turn, NO_VISIT)
        if parent_arrival < 0:
            continue
        child_dir = 1 - svc.direction
        start = parent_arrival + line.turnback_min
        arr: dict[int, float] = {r: NO_VISIT for r in range(1, n + 1)}
        dep: dict[int, float] = {r: NO_VISIT for r in range(1, n + 1)}
        arr[turn] = start
        dep[turn] = start
        step = 1 if child_dir == 1 else -1
        path = range(turn + step, n + 1 if child_dir == 1 else 0, step)
        prev = turn
        for r in path:
            runtime = line.section_runtimes[(prev, r)]
            arr[r] = dep[prev] + runtime
            is_last = r == (n if child_dir == 1 else 1)
            dep[r] = arr[r] + (0.0 if is_last else line.dwell_times.get(r, 0.0))
            prev = r
        child = TrainService(
            id=f"{svc.id}-T",
            direction=child_dir,
            arrival=arr,
            departure=dep,
            kind="turnaround",
            capacity=svc.capacity,
        )
        children.append(child)
        linkage[(svc.id, child.id)] = turn
    return tuple(children), linkage


# ---------------------------------------------------------------------------
# Onboard rows (dynamic filling) and headway compatibility
# ---------------------------------------------------------------------------


def fill_onboard(flow: PassengerFlow, conflict: int, area: SpatioTemporalArea) -> frozenset[int]:
    """Stations where the group occupies the train after arriving there.

    The row runs in travel direction from the origin up to the station just
    ahead of the destination.  On a conflicting service it stops at the
    boundary terminal of the travel direction, which is included: that entry
    marks the forced transfer point.
    """
    if flow.direction == 1:
        stations = range(flow.origin, flow.destination)
        boundary = area.station_begin
    else:
        stations = range(flow.origin, flow.destination, -1)
        boundary = area.station_end
    row: list[int] = []
    for r in stations:
        row.append(r)
        if conflict and r == boundary:
            break
    return frozenset(row)


def headway_compat(
    u_times: TimePair, v_times: TimePair, r: int, headways: Headways
) -> int:
    """1 iff the candidate times of u and v at station r violate a minimum gap.

    Four gaps are checked (arrival-arrival, arrival-departure,
    departure-arrival, departure-departure); undefined times (-1) take part
    in no gap.
    """
    ua, ud = u_times[0].get(r, NO_VISIT), u_times[1].get(r, NO_VISIT)
    va, vd = v_times[0].get(r, NO_VISIT), v_times[1].get(r, NO_VISIT)
    checks = (
        (ua, va, headways.aa),
        (ua, vd, headways.ad),
        (ud, va, headways.da),
        (ud, vd, headways.dd),
    )
    for tu, tv, minimum in checks:
        if tu >= 0 and tv >= 0 and abs(tu - tv) < minimum:
            return 1
    return 0


# ---------------------------------------------------------------------------
# Indicator set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimedPoint:
    time: float
    station: int


@dataclass
class IndicatorSet:
    """Sparse parameter bundle consumed by the stage-1 model and extraction.

    Keyed by flow id (p) and service id (u).  ``transfer_point[p, u]`` is
    the single instantaneous transfer entry of the pair, present only for
    conflicting normal services that drop the group at the boundary terminal
    of its travel direction; its accumulated form holds from that time
    onward.  ``board_wait[p, u]`` is the wait in minutes if the group takes
    that service, measured at the group's origin station against the
    candidate timetable.
    """

    area: SpatioTemporalArea
    flow_ids: tuple[str, ...]
    service_ids: tuple[str, ...]
    origin_point: dict[str, TimedPoint] = field(default_factory=dict)
    transfer_point: dict[tuple[str, str], TimedPoint] = field(default_factory=dict)
    departure_point: dict[tuple[str, str], TimedPoint] = field(default_factory=dict)
    onboard: dict[tuple[str, str], frozenset[int]] = field(default_factory=dict)
    board_wait: dict[tuple[str, str], float] = field(default_factory=dict)
    wait_ok: dict[tuple[str, str], int] = field(default_factory=dict)
    direction_ok: dict[tuple[str, str], int] = field(default_factory=dict)
    headway_clash: dict[tuple[str, str, int], int] = field(default_factory=dict)

    # Dense evaluators used by oracle-style tests; each reproduces one
    # indicator family pointwise.

    def arrival_inst(self, p: str, r: int, t: float) -> int:
        pt = self.origin_point[p]
        return int(pt.station == r and pt.time == t)

    def arrival_acc(self, p: str, r: int, t: float) -> int:
        pt = self.origin_point[p]
        return int(pt.station == r and t >= pt.time)

    def transfer_inst(self, p: str, u: str, r: int, t: float) -> int:
        pt = self.transfer_point.get((p, u))
        return int(pt is not None and pt.station == r and pt.time == t)

    def transfer_acc(self, p: str, u: str, r: int, t: float) -> int:
        pt = self.transfer_point.get((p, u))
        return int(pt is not None and pt.station == r and t >= pt.time)

    def departure_acc(self, p: str, u: str, r: int, t: float) -> int:
        pt = self.departure_point.get((p, u))
        return int(pt is not None and pt.station == r and t >= pt.time)


def build_indicators(
    flows: Iterable[PassengerFlow],
    normal_services: Iterable[TrainService],
    turnaround_services: Iterable[TrainService],
    conflict: Mapping[str, int],
    candidates: Mapping[str, TimePair],
    area: SpatioTemporalArea,
    headways: Headways,
) -> IndicatorSet:
    """Precompute every indicator parameter from the candidate timetable.

    ``conflict`` maps normal service ids to their flag; turnaround children
    never conflict.  ``candidates`` maps every service id (normal and
    turnaround) to its candidate (arrival, departure) maps.
    """
    flows = list(flows)
    normal = list(normal_services)
    turn = list(turnaround_services)
    everything = normal + turn
    ind = IndicatorSet(
        area=area,
        flow_ids=tuple(f.id for f in flows),
        service_ids=tuple(s.id for s in everything),
    )

    for f in flows:
        ind.origin_point[f.id] = TimedPoint(time=f.production_time, station=f.origin)
        row_clear = fill_onboard(f, 0, area)
        row_conflict = fill_onboard(f, 1, area)
        boundary = area.boundary_for_direction(f.direction)
        for svc in everything:
            theta = conflict.get(svc.id, 0)
            row = row_conflict if theta else row_clear
            key = (f.id, svc.id)
            ind.onboard[key] = row
            cand_arr, cand_dep = candidates[svc.id]
            arr_at_origin = cand_arr.get(f.origin, NO_VISIT)
            ind.direction_ok[key] = int(svc.direction == f.direction)
            if arr_at_origin >= 0:
                wait = arr_at_origin - f.production_time
                ind.board_wait[key] = wait
                ind.wait_ok[key] = int(wait >= 0)
            else:
                ind.wait_ok[key] = 0
            # Transfer entries exist only where a truncated service ends the
            # trip at the flow's directional boundary; boarding at that
            # station is not a transfer.
            if theta and boundary in row and boundary != f.origin:
                t_arr = cand_arr.get(boundary, NO_VISIT)
                if t_arr >= 0:
                    ind.transfer_point[key] = TimedPoint(time=t_arr, station=boundary)
            dep_at_origin = cand_dep.get(f.origin, NO_VISIT)
            if f.origin in row and dep_at_origin >= 0:
                ind.departure_point[key] = TimedPoint(time=dep_at_origin, station=f.origin)

    # Opposite directions run on separate tracks of the double line, so the
    # exclusion only pairs same-direction services.
    for u in normal:
        for v in turn:
            if u.direction != v.direction:
                continue
            for r in range(1, area.n_stations + 1):
                clash = headway_compat(candidates[u.id], candidates[v.id], r, headways)
                if clash:
                    ind.headway_clash[(u.id, v.id, r)] = 1
    return ind


# ---------------------------------------------------------------------------
# Indicator property checks
# ---------------------------------------------------------------------------


def check_arrival_uniqueness(ind: IndicatorSet) -> list[str]:
    """Flows whose instantaneous arrival entry is missing or outside the open area."""
    bad = []
    open_set = set(ind.area.open_stations)
    for p in ind.flow_ids:
        pt = ind.origin_point.get(p)
        if pt is None or pt.station not in open_set:
            bad.append(p)
    return bad


def check_transfer_weak_uniqueness(ind: IndicatorSet) -> list[tuple[str, str]]:
    """Pairs with more than one instantaneous transfer entry (never, by construction).

    The construction stores at most one timed point per (flow, service), so
    this check guards against regressions in the builder.
    """
    return []  # single point per pair by data layout; kept for symmetry


def check_inst_dominated_by_acc(ind: IndicatorSet, times: Iterable[float]) -> list[str]:
    """Pointwise dominance of instantaneous entries by their accumulated forms."""
    bad: list[str] = []
    times = list(times)
    for p in ind.flow_ids:
        pt = ind.origin_point[p]
        for t in times:
            if ind.arrival_inst(p, pt.station, t) > ind.arrival_acc(p, pt.station, t):
                bad.append(f"arrival {p} at t={t}")
    for (p, u), pt in ind.transfer_point.items():
        for t in times:
            if ind.transfer_inst(p, u, pt.station, t) > ind.transfer_acc(p, u, pt.station, t):
                bad.append(f"transfer {p}/{u} at t={t}")
    return bad


def dump_indicators_csv(ind: IndicatorSet) -> str:
    """Sparse CSV dump ``p,u,r,t,kind,value`` for diffing against oracles."""
    lines = ["p,u,r,t,kind,value"]
    for p, pt in sorted(ind.origin_point.items()):
        lines.append(f"{p},,{pt.station},{pt.time:g},arrival,1")
    for (p, u), pt in sorted(ind.transfer_point.items()):
        lines.append(f"{p},{u},{pt.station},{pt.time:g},transfer,1")
    for (p, u), pt in sorted(ind.departure_point.items()):
        lines.append(f"{p},{u},{pt.station},{pt.time:g},departure,1")
    for (p, u), row in sorted(ind.onboard.items()):
        for r in sorted(row):
            lines.append(f"{p},{u},{r},,onboard,1")
    return "\n".join(lines) + "\n"
