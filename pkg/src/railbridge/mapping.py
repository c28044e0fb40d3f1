"""Terminal accumulation to response-vehicle demand.

Task mapping rewrites a passenger OD onto the disruption boundary terminals
when the trip crosses a boundary in its travel direction; demand mapping
buckets the matched instantaneous accumulation into dispatch periods and
converts each bucket to an integer vehicle count with a capacity ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .disruption import SpatioTemporalArea
from .model import PassengerFlow
from .reschedule import TerminalEvent


@dataclass(frozen=True)
class VehicleClass:
    """One transportation task: all vehicles sharing a mapped OD pair."""

    id: int
    origin: int
    destination: int

    @property
    def direction(self) -> int:
        return 1 if self.origin < self.destination else 0


@dataclass(frozen=True)
class DemandMatrix:
    """Integer vehicles per (dispatch period, class).

    Period k covers the half-open window
    [window_begin + (k-1) * period_min, window_begin + k * period_min)
    and its vehicles are dispatched at the period's end.
    """

    entries: dict[tuple[int, int], int]
    n_periods: int
    period_min: float
    vehicle_capacity: int
    window_begin: float

    def vehicles(self, period: int, class_id: int) -> int:
        return self.entries.get((period, class_id), 0)

    def total(self, class_id: int) -> int:
        return sum(v for (_k, m), v in self.entries.items() if m == class_id)

    def dispatch_offset_min(self, period: int) -> float:
        return period * self.period_min


def task_map(flow: PassengerFlow, area: SpatioTemporalArea) -> tuple[int, int]:
    """Mapped OD of one flow (identity when no boundary is crossed).

    A trip crosses into the disruption area when its origin lies strictly
    before the near boundary in its travel direction, and crosses out of it
    when its destination lies strictly past the far boundary; destinations
    inside the area stay as they are (closed stations are legitimate vehicle
    drop-offs).
    """
    r1, r2 = area.station_begin, area.station_end
    if flow.direction == 1:
        crosses_in = flow.origin < r1 < flow.destination
        crosses_out = flow.origin < r2 < flow.destination
        origin = r1 if crosses_in else flow.origin
        dest = r2 if crosses_out else flow.destination
    else:
        crosses_in = flow.destination < r2 < flow.origin
        crosses_out = flow.destination < r1 < flow.origin
        origin = r2 if crosses_in else flow.origin
        dest = r1 if crosses_out else flow.destination
    return origin, dest


def map_flows(flows, area: SpatioTemporalArea) -> list[PassengerFlow]:
    out = []
    for f in flows:
        o, d = task_map(f, area)
        out.append(f.with_mapping(o, d))
    return out


class MappingError(ValueError):
    pass


def derive_classes(
    flows, events: list[TerminalEvent], area: SpatioTemporalArea
) -> list[VehicleClass]:
    """Distinct mapped ODs among flows that accumulate at a terminal.

    Classes are ordered by (origin, destination) and numbered from 1; the
    set is derived from the data, never hardcoded.
    """
    flows_by_id = {f.id: f for f in flows}
    ods: set[tuple[int, int]] = set()
    for ev in events:
        flow = flows_by_id.get(ev.flow)
        if flow is None:
            raise MappingError(f"terminal event references unknown flow {ev.flow}")
        o, d = task_map(flow, area)
        if o != ev.station:
            raise MappingError(
                f"flow {ev.flow} accumulates at {ev.station} but maps to origin {o}"
            )
        if o != d:
            ods.add((o, d))
    return [
        VehicleClass(id=i + 1, origin=o, destination=d)
        for i, (o, d) in enumerate(sorted(ods))
    ]


def demand_map(
    events: list[TerminalEvent],
    flows,
    classes: list[VehicleClass],
    area: SpatioTemporalArea,
    vehicle_capacity: int,
    period_min: float,
) -> DemandMatrix:
    """Ceiling of matched per-period accumulation over the vehicle capacity.

    Only accumulation inside the disruption window [begin, end) generates
    demand; events outside it belong to the normal timetable.
    """
    if vehicle_capacity <= 0:
        raise MappingError("vehicle capacity must be positive")
    if period_min <= 0:
        raise MappingError("dispatch period must be positive")
    flows_by_id = {f.id: f for f in flows}
    class_of: dict[tuple[int, int], int] = {(c.origin, c.destination): c.id for c in classes}
    window = area.time_end - area.time_begin
    n_periods = max(1, math.ceil(window / period_min))

    matched: dict[tuple[int, int], float] = {}
    for ev in events:
        if not (area.time_begin <= ev.time < area.time_end):
            continue
        flow = flows_by_id[ev.flow]
        o, d = task_map(flow, area)
        m = class_of.get((o, d))
        if m is None:
            if o == d:
                continue
            raise MappingError(f"no vehicle class for mapped OD ({o},{d})")
        k = min(n_periods, 1 + int((ev.time - area.time_begin) // period_min))
        matched[(k, m)] = matched.get((k, m), 0.0) + ev.count

    entries = {
        key: math.ceil(total / vehicle_capacity - 1e-12)
        for key, total in sorted(matched.items())
        if total > 0
    }
    return DemandMatrix(
        entries=entries,
        n_periods=n_periods,
        period_min=period_min,
        vehicle_capacity=vehicle_capacity,
        window_begin=area.time_begin,
    )


def demand_csv(matrix: DemandMatrix, source_cells: dict[int, int]) -> str:
    """CSV rows ``period,source_cell,class,vehicles`` (source cells resolved
    against the built road network)."""
    lines = ["period,source_cell,class,vehicles"]
    for (k, m), v in sorted(matrix.entries.items()):
        lines.append(f"{k},{source_cells[m]},{m},{v}")
    return "\n".join(lines) + "\n"
