"""Task mapping and vehicle demand mapping."""

from __future__ import annotations

import math
import random

import pytest

from railbridge.disruption import build_area
from railbridge.mapping import (
    MappingError,
    VehicleClass,
    demand_map,
    derive_classes,
    task_map,
)
from railbridge.model import DisruptionSpec
from railbridge.reschedule import TerminalEvent

from conftest import make_flow, make_line


def area_for(n, begin, end, t0=480.0, t1=540.0):
    return build_area(DisruptionSpec(begin, end, t0, t1), make_line(n))


def test_crossing_flow_maps_to_boundary_pair():
    area = area_for(7, 3, 5)
    assert task_map(make_flow("P", 1, 7, 0.0), area) == (3, 5)


def test_flow_inside_low_side_keeps_identity():
    area = area_for(7, 3, 5)
    assert task_map(make_flow("P", 1, 2, 0.0), area) == (1, 2)


def test_negative_crossing_flow():
    area = area_for(13, 4, 10)
    assert task_map(make_flow("P", 13, 1, 0.0), area) == (10, 4)


def test_destination_inside_area_is_kept():
    area = area_for(13, 4, 10)
    assert task_map(make_flow("P", 2, 7, 0.0), area) == (4, 7)
    assert task_map(make_flow("P", 12, 6, 0.0), area) == (10, 6)


def test_task_map_is_idempotent():
    rng = random.Random(71)
    area = area_for(13, 4, 10)
    for _ in range(200):
        a, b = rng.sample(range(1, 14), 2)
        first = task_map(make_flow("P", a, b, 0.0), area)
        if first[0] == first[1]:
            continue
        again = task_map(make_flow("P", first[0], first[1], 0.0), area)
        assert again == first


def events_for(counts):
    """counts: list of (flow_id, station, minute, n)."""
    return [TerminalEvent(f, r, t, float(n), "transfer") for f, r, t, n in counts]


def test_demand_ceiling_examples():
    area = area_for(13, 4, 10)
    flows = [make_flow("F1", 2, 12, 480.0, size=100)]
    classes = [VehicleClass(1, 4, 10)]
    matrix = demand_map(
        events_for([("F1", 4, 481.0, 100)]), flows, classes, area, 40, 5.0
    )
    assert matrix.vehicles(1, 1) == 3  # ceil(100/40)

    empty = demand_map([], flows, classes, area, 40, 5.0)
    assert empty.entries == {}

    exact = demand_map(events_for([("F1", 4, 481.0, 40)]), flows, classes, area, 40, 5.0)
    assert exact.vehicles(1, 1) == 1


def test_events_outside_window_do_not_generate_demand():
    area = area_for(13, 4, 10)
    flows = [make_flow("F1", 2, 12, 400.0, size=50)]
    classes = [VehicleClass(1, 4, 10)]
    matrix = demand_map(events_for([("F1", 4, 470.0, 50)]), flows, classes, area, 40, 5.0)
    assert matrix.entries == {}


def test_coarsest_period_equals_single_ceiling():
    area = area_for(13, 4, 10)
    flows = [make_flow("F1", 2, 12, 480.0, size=1)]
    classes = [VehicleClass(1, 4, 10)]
    events = events_for([("F1", 4, 480.0 + k, 7) for k in range(0, 60, 7)])
    matrix = demand_map(events, flows, classes, area, 40, period_min=60.0)
    total = sum(7 for _ in range(0, 60, 7))
    assert matrix.n_periods == 1
    assert matrix.vehicles(1, 1) == math.ceil(total / 40)


def test_ceiling_never_under_serves():
    rng = random.Random(77)
    area = area_for(13, 4, 10)
    flows = [make_flow("F1", 2, 12, 480.0, size=1)]
    classes = [VehicleClass(1, 4, 10)]
    for _ in range(50):
        events = events_for(
            [("F1", 4, 480.0 + rng.uniform(0, 59.9), rng.randint(1, 120)) for _ in range(12)]
        )
        matrix = demand_map(events, flows, classes, area, 40, 5.0)
        matched = sum(ev.count for ev in events)
        assert matrix.total(1) * 40 >= matched


def test_derive_classes_from_events():
    area = area_for(13, 4, 10)
    flows = [
        make_flow("A", 2, 12, 480.0),   # (4, 10)
        make_flow("B", 1, 7, 480.0),    # (4, 7)
        make_flow("C", 13, 2, 480.0),   # (10, 4)
        make_flow("D", 4, 6, 480.0),    # (4, 6), originates at the terminal
    ]
    events = [
        TerminalEvent("A", 4, 490.0, 10, "transfer"),
        TerminalEvent("B", 4, 492.0, 10, "transfer"),
        TerminalEvent("C", 10, 495.0, 10, "transfer"),
        TerminalEvent("D", 4, 500.0, 10, "origin"),
    ]
    classes = derive_classes(flows, events, area)
    assert [(c.origin, c.destination) for c in classes] == [(4, 6), (4, 7), (4, 10), (10, 4)]
    assert [c.id for c in classes] == [1, 2, 3, 4]


def test_unknown_mapped_od_raises():
    area = area_for(13, 4, 10)
    flows = [make_flow("A", 2, 12, 480.0)]
    events = [TerminalEvent("A", 4, 490.0, 10, "transfer")]
    with pytest.raises(MappingError):
        demand_map(events, flows, [VehicleClass(1, 10, 4)], area, 40, 5.0)


def test_event_at_wrong_station_is_rejected():
    area = area_for(13, 4, 10)
    flows = [make_flow("A", 2, 12, 480.0)]
    events = [TerminalEvent("A", 10, 490.0, 10, "transfer")]
    with pytest.raises(MappingError, match="maps to origin"):
        derive_classes(flows, events, area)
