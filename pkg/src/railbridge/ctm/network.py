"""Cell network construction and fixed-time signal capacity modulation.

Road segments are discretized into cells one free-flow step long (length =
free-flow speed x step length).  Per cell, the per-step flow capacity and
the jam occupancy follow from the triangular fundamental diagram:

    Q = round(q_max * dt) * lanes            [veh/step]
    N = round(q_max * (1/v + 1/w) * L) * lanes    [veh/cell]

with q_max the per-lane maximum flow (veh/s), v the free-flow speed, w the
backward wave speed and L the cell length.  Signals gate the OUTFLOW
capacity of their cell: full capacity during green steps, zero during red;
inflow capacity stays at the base value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from ..model import RoadNetworkSpec, SignalPlan, VehicleSpec

ORDINARY = "ordinary"
SOURCE = "source"
SINK = "sink"


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    id: int
    kind: str
    length_m: float = 0.0
    lanes: int = 1
    segment: str | None = None
    station: int | None = None


@dataclass
class CellNetwork:
    cells: dict[int, Cell] = field(default_factory=dict)
    successors: dict[int, list[int]] = field(default_factory=dict)
    predecessors: dict[int, list[int]] = field(default_factory=dict)
    q_base: dict[int, float] = field(default_factory=dict)
    n_jam: dict[int, float] = field(default_factory=dict)
    signals: dict[int, SignalPlan] = field(default_factory=dict)
    source_of_station: dict[int, int] = field(default_factory=dict)
    sink_of_station: dict[int, int] = field(default_factory=dict)
    dt_seconds: float = 20.0
    free_flow_mps: float = 20.0
    wave_mps: float = 10.0

    @property
    def wave_ratio(self) -> float:
        return self.wave_mps / self.free_flow_mps

    @property
    def cell_length_m(self) -> float:
        return self.free_flow_mps * self.dt_seconds

    def ordinary_cells(self) -> list[int]:
        return [i for i, c in self.cells.items() if c.kind == ORDINARY]

    def is_green(self, cell: int, step: int) -> bool:
        """Red before the first green appears, then periodic green windows."""
        plan = self.signals.get(cell)
        if plan is None:
            return True
        if step < plan.offset:
            return False
        return (step - plan.offset) % plan.cycle < plan.green

    def outflow_capacity(self, cell: int, step: int) -> float:
        return self.q_base[cell] if self.is_green(cell, step) else 0.0

    def inflow_capacity(self, cell: int) -> float:
        return self.q_base[cell]

    def add_connector(self, i: int, j: int) -> None:
        if j not in self.successors[i]:
            self.successors[i].append(j)
        if i not in self.predecessors[j]:
            self.predecessors[j].append(i)


def _cell_parameters(vehicle: VehicleSpec, dt: float, length: float, lanes: int) -> tuple[float, float]:
    q_per_sec = vehicle.max_flow_vph_per_lane / 3600.0
    q = round(q_per_sec * dt) * lanes
    k_jam = q_per_sec * (1.0 / vehicle.free_flow_mps + 1.0 / vehicle.wave_mps)
    n = round(k_jam * length) * lanes
    return float(q), float(n)


def build_network(
    spec: RoadNetworkSpec,
    vehicle: VehicleSpec,
    source_stations: list[int] | None = None,
    sink_stations: list[int] | None = None,
) -> CellNetwork:
    """Discretize the road spec and attach station sources and sinks.

    Ordinary cells are numbered from 1 in segment declaration order, then
    sources, then sinks, so signal plans can reference stable cell ids.  A
    segment shorter than one cell is merged into a following segment at its
    exit node when one exists (warning emitted), otherwise it still becomes
    a single cell.
    """
    net = CellNetwork(
        dt_seconds=spec.dt_seconds,
        free_flow_mps=vehicle.free_flow_mps,
        wave_mps=vehicle.wave_mps,
    )
    cell_len = net.cell_length_m
    next_id = 1

    # short segments merged forward where possible
    extra_length: dict[str, float] = {}
    alias: dict[str, str] = {}
    skipped: set[str] = set()
    for seg in spec.segments:
        if seg.length_m >= cell_len:
            continue
        absorber = next(
            (s for s in spec.segments if s is not seg and s.from_node == seg.to_node), None
        )
        if absorber is None:
            continue
        warnings.warn(
            f"segment {seg.id} shorter than one cell ({seg.length_m:g} m); "
            f"merged into {absorber.id}"
        )
        extra_length[absorber.id] = extra_length.get(absorber.id, 0.0) + seg.length_m
        alias[seg.from_node] = seg.to_node
        skipped.add(seg.id)

    def resolve(node: str) -> str:
        seen = set()
        while node in alias and node not in seen:
            seen.add(node)
            node = alias[node]
        return node

    head_of_segment: dict[str, int] = {}
    tail_of_segment: dict[str, int] = {}
    seg_nodes: list[tuple[str, str, str]] = []
    for seg in spec.segments:
        if seg.id in skipped:
            continue
        length = seg.length_m + extra_length.get(seg.id, 0.0)
        n_cells = max(1, math.ceil(length / cell_len))
        q, n_max = _cell_parameters(vehicle, spec.dt_seconds, cell_len, seg.lanes)
        prev = None
        for k in range(n_cells):
            cid = next_id
            next_id += 1
            net.cells[cid] = Cell(cid, ORDINARY, cell_len, seg.lanes, seg.id)
            net.successors[cid] = []
            net.predecessors[cid] = []
            net.q_base[cid] = q
            net.n_jam[cid] = n_max
            if prev is not None:
                net.add_connector(prev, cid)
            else:
                head_of_segment[seg.id] = cid
            prev = cid
        tail_of_segment[seg.id] = prev
        seg_nodes.append((seg.id, resolve(seg.from_node), resolve(seg.to_node)))

    # junctions: tail -> heads of segments leaving the same node
    for sid, _from, to in seg_nodes:
        for other_id, other_from, _other_to in seg_nodes:
            if other_from == to:
                net.add_connector(tail_of_segment[sid], head_of_segment[other_id])

    # station sources and sinks
    anchors = {r: resolve(node) for r, node in spec.station_anchors.items()}
    for r in sorted(source_stations or []):
        node = anchors.get(r)
        if node is None:
            raise NetworkError(f"no road anchor for station {r}")
        cid = next_id
        next_id += 1
        net.cells[cid] = Cell(cid, SOURCE, station=r)
        net.successors[cid] = []
        net.predecessors[cid] = []
        net.source_of_station[r] = cid
        attached = False
        for sid, from_node, _to in seg_nodes:
            if from_node == node:
                net.add_connector(cid, head_of_segment[sid])
                attached = True
        if not attached:
            raise NetworkError(f"station {r} anchor node {node} has no outgoing segment")
    for r in sorted(sink_stations or []):
        node = anchors.get(r)
        if node is None:
            raise NetworkError(f"no road anchor for station {r}")
        cid = next_id
        next_id += 1
        net.cells[cid] = Cell(cid, SINK, station=r)
        net.successors[cid] = []
        net.predecessors[cid] = []
        net.sink_of_station[r] = cid
        attached = False
        for sid, _from, to_node in seg_nodes:
            if to_node == node:
                net.add_connector(tail_of_segment[sid], cid)
                attached = True
        if not attached:
            raise NetworkError(f"station {r} anchor node {node} has no incoming segment")

    for plan in spec.signals:
        if plan.cell not in net.cells or net.cells[plan.cell].kind != ORDINARY:
            raise NetworkError(f"signal plan references unknown cell {plan.cell}")
        if plan.green > plan.cycle or plan.cycle <= 0 or plan.offset >= plan.cycle:
            raise NetworkError(f"signal plan on cell {plan.cell} is inconsistent")
        net.signals[plan.cell] = plan
    return net


def bind_classes(net: CellNetwork, classes) -> dict[int, tuple[int, int]]:
    """class id -> (source cell, sink cell); both stations must be anchored."""
    out: dict[int, tuple[int, int]] = {}
    for cls in classes:
        src = net.source_of_station.get(cls.origin)
        snk = net.sink_of_station.get(cls.destination)
        if src is None or snk is None:
            raise NetworkError(
                f"class {cls.id} ({cls.origin}->{cls.destination}) has no road cells"
            )
        out[cls.id] = (src, snk)
    return out
