"""Stage-1 rescheduling: model build, solve, extraction and audits.

The decision core couples per-service activation binaries, big-M pinned
station times, visit indicators, the pairwise headway exclusion between
normal services and turnaround candidates, and the integer passenger
assignment with its gate and capacity constraints.  Constraint instances
whose indicator parameters make them vacuous are not emitted, and variables
that every integer-feasible completion pins to a single value (times of
non-conflicting services, times outside a service's reachable area) are
emitted as fixed-bound columns; the families are otherwise materialized
one-to-one.

Two distinct big-M values are used and reported: the objective penalty
(lower-bounded by the largest feasible boarding wait, see ``objective_m``)
and the time-pinning constant (horizon end plus two).

Accumulation series are affine in the assignment, so they are evaluated
exactly from the solved assignment during extraction; ``build_stage1`` can
optionally materialize them as model columns, which a test uses to prove
both representations coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .disruption import (
    IndicatorSet,
    SpatioTemporalArea,
    build_area,
    build_indicators,
    candidate_times,
    classify_services,
    detect_conflict,
    generate_turnarounds,
)
from .milp.core import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, LinearModel
from .milp.engine import solve_milp
from .model import NO_VISIT, PassengerFlow, Scenario, SolverConfig, TrainService


class Stage1BuildError(ValueError):
    pass


class Stage1Infeasible(RuntimeError):
    def __init__(self, message: str, irreducible_rows: list[str] | None = None):
        super().__init__(message)
        self.irreducible_rows = irreducible_rows or []


# ---------------------------------------------------------------------------
# Precomputation bundle
# ---------------------------------------------------------------------------


@dataclass
class Stage1Inputs:
    scenario: Scenario
    area: SpatioTemporalArea
    conflict: dict[str, int]
    children: tuple[TrainService, ...]
    linkage: dict[tuple[str, str], int]
    candidates: dict[str, tuple[dict[int, float], dict[int, float]]]
    indicators: IndicatorSet

    @property
    def all_services(self) -> list[TrainService]:
        return list(self.scenario.services) + list(self.children)

    def service(self, sid: str) -> TrainService:
        for svc in self.all_services:
            if svc.id == sid:
                return svc
        raise KeyError(sid)


def prepare_stage1(scenario: Scenario) -> Stage1Inputs:
    """Run every precomputation the model build consumes."""
    area = build_area(scenario.disruption, scenario.line)
    conflict = {svc.id: detect_conflict(svc, area) for svc in scenario.services}
    children, linkage = generate_turnarounds(scenario.services, area, scenario.line)
    candidates: dict[str, tuple[dict[int, float], dict[int, float]]] = {}
    for svc in scenario.services:
        candidates[svc.id] = candidate_times(svc, area, conflict[svc.id])
    for child in children:
        candidates[child.id] = (dict(child.arrival), dict(child.departure))
    indicators = build_indicators(
        scenario.flows,
        scenario.services,
        children,
        conflict,
        candidates,
        area,
        scenario.headways,
    )
    return Stage1Inputs(
        scenario=scenario,
        area=area,
        conflict=conflict,
        children=children,
        linkage=linkage,
        candidates=candidates,
        indicators=indicators,
    )


def admissible_pairs(inputs: Stage1Inputs) -> list[tuple[str, str]]:
    """(flow, service) pairs that pass the parameter boarding gates.

    The direction gate and the nonnegative-wait gate are pure parameters;
    a pair whose candidate departure at the flow's origin is the -1
    sentinel can never board either, because the departure-time gate pins
    its assignment to zero in both activation states.
    """
    ind = inputs.indicators
    out = []
    for f in inputs.scenario.flows:
        for svc in inputs.all_services:
            key = (f.id, svc.id)
            if not ind.direction_ok.get(key):
                continue
            if not ind.wait_ok.get(key):
                continue
            cand_dep = inputs.candidates[svc.id][1].get(f.origin, NO_VISIT)
            if cand_dep < 0:
                continue
            out.append(key)
    return out


def objective_m(inputs: Stage1Inputs, weight_wait_by_size: bool = False) -> float:
    """Default stranding penalty: one above the largest feasible boarding-wait
    coefficient, so stranding a passenger never beats any feasible boarding."""
    sizes = {f.id: float(f.size) for f in inputs.scenario.flows}
    waits = [
        inputs.indicators.board_wait[key] * (sizes[key[0]] if weight_wait_by_size else 1.0)
        for key in admissible_pairs(inputs)
    ]
    return 1.0 + max([0.0] + waits)


# ---------------------------------------------------------------------------
# Model build
# ---------------------------------------------------------------------------


@dataclass
class Stage1Model:
    model: LinearModel
    inputs: Stage1Inputs
    big_m_objective: float
    big_m_time: float
    act: dict[str, int] = field(default_factory=dict)
    t_arr: dict[tuple[str, int], int] = field(default_factory=dict)
    t_dep: dict[tuple[str, int], int] = field(default_factory=dict)
    visit: dict[tuple[str, int], int] = field(default_factory=dict)
    board: dict[tuple[str, str], int] = field(default_factory=dict)
    strand: dict[str, int] = field(default_factory=dict)
    load: dict[tuple[str, int], int] = field(default_factory=dict)


def _kept_region(svc: TrainService, area: SpatioTemporalArea) -> tuple[set[int], int]:
    if svc.direction == 1:
        return set(area.ms1), area.terminal1
    return set(area.ms2), area.terminal2


def build_stage1(
    inputs: Stage1Inputs,
    big_m: float | None = None,
    weight_wait_by_size: bool = False,
    materialize_accumulation: bool = False,
) -> Stage1Model:
    scn = inputs.scenario
    area = inputs.area
    ind = inputs.indicators
    m_obj = big_m if big_m is not None else objective_m(inputs, weight_wait_by_size)
    m_time = scn.horizon[1] + 2.0
    lm = LinearModel("stage1")
    sm = Stage1Model(model=lm, inputs=inputs, big_m_objective=m_obj, big_m_time=m_time)

    t_lo, t_hi = -1.0, scn.horizon[1]

    def add_time_var(kind: str, sid: str, r: int, on_value: float, off_value: float, act_idx: int | None):
        """Column for one station time: value on_value when the service runs,
        off_value (-1) when it does not; both equal -> fixed column."""
        name = f"t{kind}[{sid},{r}]"
        registry = sm.t_arr if kind == "a" else sm.t_dep
        if act_idx is None or on_value == off_value:
            idx = lm.add_variable(name, CONTINUOUS, lb=on_value, ub=on_value)
            registry[(sid, r)] = idx
            return idx
        idx = lm.add_variable(name, CONTINUOUS, lb=min(off_value, on_value), ub=max(off_value, on_value))
        registry[(sid, r)] = idx
        # on_value when activated
        lm.add_constraint(f"pin{kind}_lo[{sid},{r}]", {idx: 1.0, act_idx: -m_time}, GE, on_value - m_time)
        lm.add_constraint(f"pin{kind}_hi[{sid},{r}]", {idx: 1.0, act_idx: m_time}, LE, on_value + m_time)
        # off_value when deactivated
        lm.add_constraint(f"off{kind}_lo[{sid},{r}]", {idx: 1.0, act_idx: m_time}, GE, off_value)
        lm.add_constraint(f"off{kind}_hi[{sid},{r}]", {idx: 1.0, act_idx: -m_time}, LE, off_value)
        return idx

    def add_visit_var(sid: str, r: int, forced: float | None, act_idx: int | None):
        name = f"s[{sid},{r}]"
        if forced is not None or act_idx is None:
            v = forced if forced is not None else 0.0
            sm.visit[(sid, r)] = lm.add_variable(name, BINARY, lb=v, ub=v)
            return
        idx = lm.add_variable(name, BINARY)
        sm.visit[(sid, r)] = idx
        lm.add_constraint(f"vis_lo[{sid},{r}]", {idx: 1.0, act_idx: -1.0}, GE, 0.0)
        lm.add_constraint(f"vis_hi[{sid},{r}]", {idx: 1.0, act_idx: -1.0}, LE, 0.0)

    # -- activation and time pinning: normal services ----------------------
    for svc in scn.services:
        theta = inputs.conflict[svc.id]
        cand_arr, cand_dep = inputs.candidates[svc.id]
        if theta == 0:
            # must run unchanged: activation forced, times and visits fixed
            sm.act[svc.id] = lm.add_variable(f"a[{svc.id}]", BINARY, lb=1.0, ub=1.0)
            for r in scn.line.stations:
                add_time_var("a", svc.id, r, cand_arr[r], cand_arr[r], None)
                add_time_var("d", svc.id, r, cand_dep[r], cand_dep[r], None)
                add_visit_var(svc.id, r, 1.0, None)
            continue
        act_idx = lm.add_variable(f"a[{svc.id}]", BINARY)
        sm.act[svc.id] = act_idx
        kept, _terminal = _kept_region(svc, area)
        for r in scn.line.stations:
            if r in kept:
                add_time_var("a", svc.id, r, cand_arr[r], NO_VISIT, act_idx)
                add_time_var("d", svc.id, r, cand_dep[r], NO_VISIT, act_idx)
                add_visit_var(svc.id, r, None, act_idx)
            else:
                add_time_var("a", svc.id, r, NO_VISIT, NO_VISIT, None)
                add_time_var("d", svc.id, r, NO_VISIT, NO_VISIT, None)
                add_visit_var(svc.id, r, 0.0, None)

    # -- turnaround children ------------------------------------------------
    parent_of = {child_id: parent_id for (parent_id, child_id) in inputs.linkage}
    for child in inputs.children:
        act_idx = lm.add_variable(f"a[{child.id}]", BINARY)
        sm.act[child.id] = act_idx
        parent_act = sm.act[parent_of[child.id]]
        lm.add_constraint(f"turn_on[{child.id}]", {act_idx: 1.0, parent_act: -1.0}, GE, 0.0)
        lm.add_constraint(f"turn_off[{child.id}]", {act_idx: 1.0, parent_act: -1.0}, LE, 0.0)
        cand_arr, cand_dep = inputs.candidates[child.id]
        turn = inputs.linkage[(parent_of[child.id], child.id)]
        if child.direction == 1:
            in_range = set(range(turn, area.n_stations + 1))
        else:
            in_range = set(range(1, turn + 1))
        for r in scn.line.stations:
            if r in in_range:
                add_time_var("a", child.id, r, cand_arr[r], NO_VISIT, act_idx)
                add_time_var("d", child.id, r, cand_dep[r], NO_VISIT, act_idx)
                add_visit_var(child.id, r, None, act_idx)
            else:
                add_time_var("a", child.id, r, NO_VISIT, NO_VISIT, None)
                add_time_var("d", child.id, r, NO_VISIT, NO_VISIT, None)
                add_visit_var(child.id, r, 0.0, None)

    # -- headway exclusion between normal services and turnaround children --
    for (uid, vid, r), clash in sorted(ind.headway_clash.items()):
        if not clash:
            continue
        su = sm.visit[(uid, r)]
        sv = sm.visit[(vid, r)]
        lm.add_constraint(f"headway[{uid},{vid},{r}]", {su: 1.0, sv: 1.0}, LE, 1.0)

    # -- passenger assignment ------------------------------------------------
    pairs = admissible_pairs(inputs)
    pairs_by_flow: dict[str, list[str]] = {f.id: [] for f in scn.flows}
    for p, u in pairs:
        pairs_by_flow[p].append(u)
    flows_by_id = {f.id: f for f in scn.flows}

    for f in scn.flows:
        n = float(f.size)
        strand_idx = lm.add_variable(f"xs[{f.id}]", INTEGER, lb=0.0, ub=n, obj=m_obj)
        sm.strand[f.id] = strand_idx
        row = {strand_idx: 1.0}
        for u in pairs_by_flow[f.id]:
            wait = ind.board_wait[(f.id, u)]
            coeff = wait * (n if weight_wait_by_size else 1.0)
            x_idx = lm.add_variable(f"x[{f.id},{u}]", INTEGER, lb=0.0, ub=n, obj=coeff)
            sm.board[(f.id, u)] = x_idx
            row[x_idx] = 1.0
            dep_idx = sm.t_dep.get((u, f.origin))
            if dep_idx is None:
                raise Stage1BuildError(f"missing departure time column for ({u},{f.origin})")
            lm.add_constraint(f"gate_dep[{f.id},{u}]", {x_idx: 1.0, dep_idx: -n}, LE, n)
            lm.add_constraint(f"gate_act[{f.id},{u}]", {x_idx: 1.0, sm.act[u]: -n}, LE, 0.0)
        lm.add_constraint(f"conserve[{f.id}]", row, EQ, n)

    # -- onboard load and train capacity ------------------------------------
    load_members: dict[tuple[str, int], list[tuple[str, int]]] = {}
    for p, u in pairs:
        onboard = ind.onboard.get((p, u))
        if onboard is None:
            raise Stage1BuildError(f"missing onboard row for ({p},{u})")
        for r in onboard:
            load_members.setdefault((u, r), []).append((p, sm.board[(p, u)]))
    for (u, r), members in sorted(load_members.items()):
        cap = scn.service_capacity(inputs.service(u))
        c_idx = lm.add_variable(f"C[{u},{r}]", CONTINUOUS, lb=0.0, ub=cap)
        sm.load[(u, r)] = c_idx
        row = {c_idx: 1.0}
        for _p, x_idx in members:
            row[x_idx] = -1.0
        lm.add_constraint(f"load_def[{u},{r}]", row, EQ, 0.0)

    if materialize_accumulation:
        _materialize_accumulation(sm)
    lm.validate()
    return sm


def _materialize_accumulation(sm: Stage1Model) -> None:
    """Optional columns for the accumulation series (toy-scale only).

    Each series value is an affine expression in the assignment; the
    defining equalities added here let a test confirm that the post-solve
    evaluation used by extraction matches the in-model values.
    """
    inputs = sm.inputs
    scn = inputs.scenario
    ind = inputs.indicators
    lm = sm.model
    ticks = scn.horizon_minutes
    open_set = set(inputs.area.open_stations)
    for f in scn.flows:
        for r in sorted(open_set):
            for t in ticks:
                a_terms: dict[int, float] = {}
                a_const = float(f.size) * ind.arrival_acc(f.id, r, t)
                d_terms: dict[int, float] = {}
                for u in [s.id for s in inputs.all_services]:
                    x_idx = sm.board.get((f.id, u))
                    if x_idx is None:
                        continue
                    if ind.transfer_acc(f.id, u, r, t):
                        a_terms[x_idx] = a_terms.get(x_idx, 0.0) + 1.0
                    if ind.departure_acc(f.id, u, r, t):
                        d_terms[x_idx] = d_terms.get(x_idx, 0.0) + 1.0
                a_idx = lm.add_variable(f"A[{f.id},{r},{t}]", CONTINUOUS, lb=0.0, ub=math.inf)
                d_idx = lm.add_variable(f"D[{f.id},{r},{t}]", CONTINUOUS, lb=0.0, ub=math.inf)
                g_idx = lm.add_variable(f"G[{f.id},{r},{t}]", CONTINUOUS, lb=-math.inf, ub=math.inf)
                lm.add_constraint(
                    f"def_A[{f.id},{r},{t}]", {a_idx: 1.0, **{k: -v for k, v in a_terms.items()}}, EQ, a_const
                )
                lm.add_constraint(
                    f"def_D[{f.id},{r},{t}]", {d_idx: 1.0, **{k: -v for k, v in d_terms.items()}}, EQ, 0.0
                )
                lm.add_constraint(
                    f"def_G[{f.id},{r},{t}]", {g_idx: 1.0, a_idx: -1.0, d_idx: 1.0}, EQ, 0.0
                )


# ---------------------------------------------------------------------------
# Solution containers
# ---------------------------------------------------------------------------


@dataclass
class ServiceOutcome:
    id: str
    kind: str
    direction: int
    activated: bool
    turn_station: int | None
    arrival: dict[int, float]
    departure: dict[int, float]
    visits: dict[int, int]


@dataclass
class TimetableStats:
    canceled: dict[int, int]
    turned: dict[int, int]
    conflicting: dict[int, int]
    total: dict[int, int]
    recovery_min: dict[int, float | None]


@dataclass
class RescheduledTimetable:
    outcomes: list[ServiceOutcome]
    stats: TimetableStats

    def outcome(self, sid: str) -> ServiceOutcome:
        for o in self.outcomes:
            if o.id == sid:
                return o
        raise KeyError(sid)


@dataclass
class TerminalEvent:
    """One instantaneous accumulation event at a disruption terminal."""

    flow: str
    station: int
    time: float
    count: float
    kind: str  # "origin" or "transfer"


@dataclass
class AccumulationSeries:
    stations: list[int]
    ticks: list[int]
    arrived: np.ndarray  # (station, tick) cumulative
    departed: np.ndarray
    stranded: np.ndarray
    instantaneous: np.ndarray
    terminal_events: list[TerminalEvent]
    avg_wait_min: dict[int, float]
    arrivals_per_min: dict[int, float]

    def row(self, station: int) -> int:
        return self.stations.index(station)


@dataclass
class Stage1Solution:
    timetable: RescheduledTimetable
    assignment: dict[tuple[str, str], int]
    stranded: dict[str, int]
    series: AccumulationSeries
    objective: float
    stats: dict


# ---------------------------------------------------------------------------
# Solve and extraction
# ---------------------------------------------------------------------------


def diagnose_infeasible(model: LinearModel, config: SolverConfig, cap: int = 400) -> list[str]:
    """Irreducible infeasible row subset by deletion filtering (desk scale)."""
    if model.n_rows > cap:
        return []
    keep = list(range(model.n_rows))
    for row in list(keep):
        trial = [i for i in keep if i != row]
        sub = LinearModel(model.name + "-diag")
        for v in model.variables:
            sub.add_variable(v.name, v.kind, v.lb, v.ub, v.obj)
        for i in trial:
            con = model.constraints[i]
            sub.add_constraint(con.name, con.coeffs, con.sense, con.rhs)
        res = solve_milp(sub, eps=config.eps, eps_int=config.eps_int, engine="embedded",
                         node_limit=config.node_limit, iter_limit=config.iter_limit)
        if res.status == "infeasible":
            keep = trial
    return [model.constraints[i].name for i in keep]


def solve_stage1(sm: Stage1Model, config: SolverConfig | None = None) -> Stage1Solution:
    config = config or sm.inputs.scenario.solver
    res = solve_milp(
        sm.model,
        eps=config.eps,
        eps_int=config.eps_int,
        node_limit=config.node_limit,
        iter_limit=config.iter_limit,
        threads=config.threads,
        engine=config.engine,
    )
    if res.status == "infeasible":
        rows = diagnose_infeasible(sm.model, config)
        detail = f" irreducible rows: {', '.join(rows)}" if rows else ""
        raise Stage1Infeasible(f"stage-1 model infeasible;{detail}", rows)
    if not res.optimal:
        raise Stage1Infeasible(f"stage-1 solve ended with status {res.status}")
    return extract_solution(sm, res.values, res.objective, res.stats)


def extract_solution(sm: Stage1Model, values: np.ndarray, objective: float, stats: dict) -> Stage1Solution:
    inputs = sm.inputs
    scn = inputs.scenario

    def val(idx: int) -> float:
        return float(values[idx])

    outcomes: list[ServiceOutcome] = []
    parent_turn = {child_id: turn for (pid, child_id), turn in inputs.linkage.items()}
    for svc in inputs.all_services:
        activated = val(sm.act[svc.id]) > 0.5
        arrival = {r: round(val(sm.t_arr[(svc.id, r)]), 6) for r in scn.line.stations}
        departure = {r: round(val(sm.t_dep[(svc.id, r)]), 6) for r in scn.line.stations}
        visits = {r: int(round(val(sm.visit[(svc.id, r)]))) for r in scn.line.stations}
        turn_station = parent_turn.get(svc.id) if svc.kind == "turnaround" else (
            inputs.area.boundary_for_direction(svc.direction)
            if inputs.conflict.get(svc.id, 0) and activated
            else None
        )
        outcomes.append(
            ServiceOutcome(
                id=svc.id,
                kind=svc.kind,
                direction=svc.direction,
                activated=activated,
                turn_station=turn_station,
                arrival=arrival,
                departure=departure,
                visits=visits,
            )
        )

    assignment: dict[tuple[str, str], int] = {}
    for key, idx in sm.board.items():
        q = int(round(val(idx)))
        if q:
            assignment[key] = q
    stranded = {p: int(round(val(idx))) for p, idx in sm.strand.items()}

    stats_out = dict(stats)
    stats_out["big_m_objective"] = sm.big_m_objective
    stats_out["big_m_time"] = sm.big_m_time
    timetable = RescheduledTimetable(outcomes=outcomes, stats=_timetable_stats(sm, outcomes))
    series = accumulation_series(inputs, assignment, stranded)
    return Stage1Solution(
        timetable=timetable,
        assignment=assignment,
        stranded=stranded,
        series=series,
        objective=float(objective),
        stats=stats_out,
    )


def _timetable_stats(sm: Stage1Model, outcomes: list[ServiceOutcome]) -> TimetableStats:
    inputs = sm.inputs
    area = inputs.area
    canceled = {0: 0, 1: 0}
    turned = {0: 0, 1: 0}
    conflicting = {0: 0, 1: 0}
    total = {0: 0, 1: 0}
    for svc in inputs.scenario.services:
        total[svc.direction] += 1
        if inputs.conflict[svc.id]:
            conflicting[svc.direction] += 1
    by_id = {o.id: o for o in outcomes}
    for svc in inputs.scenario.services:
        o = by_id[svc.id]
        if not o.activated:
            canceled[svc.direction] += 1
    for child in inputs.children:
        if by_id[child.id].activated:
            parent_dir = 1 - child.direction
            turned[parent_dir] += 1

    recovery: dict[int, float | None] = {}
    for direction in (0, 1):
        entry = area.terminal1 if direction == 1 else area.terminal2
        best: float | None = None
        for svc in inputs.scenario.services:
            if svc.direction != direction or inputs.conflict[svc.id]:
                continue
            o = by_id[svc.id]
            if not o.activated:
                continue
            dep = o.departure.get(entry, NO_VISIT)
            if dep >= area.time_end and (best is None or dep < best):
                best = dep
        recovery[direction] = (best - area.time_end) if best is not None else None
    return TimetableStats(
        canceled=canceled, turned=turned, conflicting=conflicting, total=total, recovery_min=recovery
    )


# ---------------------------------------------------------------------------
# Accumulation series
# ---------------------------------------------------------------------------


def accumulation_series(
    inputs: Stage1Inputs,
    assignment: dict[tuple[str, str], int],
    stranded: dict[str, int],
) -> AccumulationSeries:
    scn = inputs.scenario
    area = inputs.area
    ind = inputs.indicators
    stations = list(scn.line.stations)
    ticks = scn.horizon_minutes
    n_r, n_t = len(stations), len(ticks)
    r_pos = {r: i for i, r in enumerate(stations)}
    t0 = ticks[0]
    open_set = set(area.open_stations)

    arrive_events: list[tuple[int, float, float]] = []  # (station, time, delta)
    depart_events: list[tuple[int, float, float]] = []
    inst_events: list[TerminalEvent] = []

    for f in scn.flows:
        n = float(f.size)
        if f.origin in open_set:
            arrive_events.append((f.origin, f.production_time, n))
        if f.origin == area.terminal1 and f.direction == 1:
            inst_events.append(TerminalEvent(f.id, f.origin, f.production_time, n, "origin"))
        if f.origin == area.terminal2 and f.direction == 0:
            inst_events.append(TerminalEvent(f.id, f.origin, f.production_time, n, "origin"))
        for svc in inputs.all_services:
            q = assignment.get((f.id, svc.id))
            if not q:
                continue
            tp = ind.transfer_point.get((f.id, svc.id))
            if tp is not None and tp.station in open_set:
                arrive_events.append((tp.station, tp.time, float(q)))
                inst_events.append(TerminalEvent(f.id, tp.station, tp.time, float(q), "transfer"))
            dp = ind.departure_point.get((f.id, svc.id))
            if dp is not None and dp.station in open_set:
                depart_events.append((dp.station, dp.time, float(q)))

    arrived = np.zeros((n_r, n_t))
    departed = np.zeros((n_r, n_t))
    instantaneous = np.zeros((n_r, n_t))
    for station, time_, delta in arrive_events:
        k = max(0, math.ceil(time_ - t0))
        if k < n_t:
            arrived[r_pos[station], k:] += delta
    for station, time_, delta in depart_events:
        k = max(0, math.ceil(time_ - t0))
        if k < n_t:
            departed[r_pos[station], k:] += delta
    for ev in inst_events:
        k = int(math.floor(ev.time - t0))
        if 0 <= k < n_t:
            instantaneous[r_pos[ev.station], k] += ev.count
    stranded_series = arrived - departed

    # waiting summary: assigned groups wait for their service, stranded
    # passengers wait out the disruption window
    wait_num: dict[int, float] = {r: 0.0 for r in stations}
    wait_den: dict[int, float] = {r: 0.0 for r in stations}
    for f in scn.flows:
        for svc in inputs.all_services:
            q = assignment.get((f.id, svc.id))
            if q:
                wait_num[f.origin] += q * ind.board_wait[(f.id, svc.id)]
                wait_den[f.origin] += q
        q_str = stranded.get(f.id, 0)
        if q_str:
            wait_num[f.origin] += q_str * max(0.0, area.time_end - f.production_time)
            wait_den[f.origin] += q_str
    avg_wait = {r: (wait_num[r] / wait_den[r] if wait_den[r] else 0.0) for r in stations}

    window = max(1.0, area.time_end - area.time_begin)
    arrivals_per_min: dict[int, float] = {}
    for r in stations:
        i = r_pos[r]
        k0 = max(0, math.ceil(area.time_begin - t0))
        k1 = min(n_t - 1, int(area.time_end - t0))
        gained = arrived[i, k1] - (arrived[i, k0 - 1] if k0 > 0 else 0.0)
        arrivals_per_min[r] = gained / window

    return AccumulationSeries(
        stations=stations,
        ticks=ticks,
        arrived=arrived,
        departed=departed,
        stranded=stranded_series,
        instantaneous=instantaneous,
        terminal_events=inst_events,
        avg_wait_min=avg_wait,
        arrivals_per_min=arrivals_per_min,
    )


# ---------------------------------------------------------------------------
# Post-hoc audits
# ---------------------------------------------------------------------------


def audit_headways(
    timetable: RescheduledTimetable,
    headways,
    scope: str = "all",
) -> list[str]:
    """Independent four-gap check over activated same-direction pairs.

    Opposite directions run on separate tracks and never share a platform
    conflict.  scope "cross" restricts to normal-versus-turnaround pairs
    (the pairs the model constrains); "all" audits every activated
    same-direction pair and assumes the input timetable already satisfied
    the minima.
    """
    active = [o for o in timetable.outcomes if o.activated]
    violations = []
    for i, u in enumerate(active):
        for v in active[i + 1 :]:
            if u.direction != v.direction:
                continue
            if scope == "cross" and {u.kind, v.kind} != {"normal", "turnaround"}:
                continue
            for r in u.arrival:
                gaps = (
                    (u.arrival[r], v.arrival.get(r, NO_VISIT), headways.aa, "aa"),
                    (u.arrival[r], v.departure.get(r, NO_VISIT), headways.ad, "ad"),
                    (u.departure[r], v.arrival.get(r, NO_VISIT), headways.da, "da"),
                    (u.departure[r], v.departure.get(r, NO_VISIT), headways.dd, "dd"),
                )
                for tu, tv, minimum, kind in gaps:
                    if tu >= 0 and tv >= 0 and abs(tu - tv) < minimum - 1e-9:
                        violations.append(f"{u.id}/{v.id}@{r}:{kind} gap {abs(tu - tv):g}")
    return violations


def audit_disruption(timetable: RescheduledTimetable, area: SpatioTemporalArea) -> list[str]:
    """No activated service may cross a blocked section during the window.

    A service traverses section (a, b) only when it both departs the entry
    station and arrives at the exit station; merely calling at a boundary
    terminal (a truncated run or a turnaround start) is not a crossing.
    """
    violations = []
    for o in timetable.outcomes:
        if not o.activated:
            continue
        for unit in area.units:
            a, b = unit.section
            if o.direction == 1:
                dep, arr = o.departure.get(a, NO_VISIT), o.arrival.get(b, NO_VISIT)
            else:
                dep, arr = o.departure.get(b, NO_VISIT), o.arrival.get(a, NO_VISIT)
            if dep < 0 or arr < 0:
                continue
            for t in (dep, arr):
                if unit.time_begin < t < unit.time_end:
                    violations.append(f"{o.id} crosses section {unit.section} at {t:g}")
    return violations


def audit_capacity(
    inputs: Stage1Inputs, assignment: dict[tuple[str, str], int]
) -> list[str]:
    loads: dict[tuple[str, int], float] = {}
    for (p, u), q in assignment.items():
        for r in inputs.indicators.onboard[(p, u)]:
            loads[(u, r)] = loads.get((u, r), 0.0) + q
    violations = []
    for (u, r), total in sorted(loads.items()):
        cap = inputs.scenario.service_capacity(inputs.service(u))
        if total > cap + 1e-9:
            violations.append(f"{u}@{r}: load {total:g} over capacity {cap:g}")
    return violations


def audit_conservation(
    inputs: Stage1Inputs, assignment: dict[tuple[str, str], int], stranded: dict[str, int]
) -> list[str]:
    violations = []
    for f in inputs.scenario.flows:
        total = stranded.get(f.id, 0) + sum(
            q for (p, _u), q in assignment.items() if p == f.id
        )
        if total != f.size:
            violations.append(f"{f.id}: assigned+stranded {total} != size {f.size}")
    return violations


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def timetable_csv(timetable: RescheduledTimetable) -> str:
    lines = ["service_id,direction,kind,activated,turn_station,station,arr,dep"]
    for o in timetable.outcomes:
        turn = o.turn_station if o.turn_station is not None else ""
        for r in sorted(o.arrival):
            lines.append(
                f"{o.id},{o.direction},{o.kind},{int(o.activated)},{turn},{r},"
                f"{o.arrival[r]:g},{o.departure[r]:g}"
            )
    return "\n".join(lines) + "\n"


def accumulation_csv(series: AccumulationSeries) -> str:
    lines = ["station,t,A,D,G,inst_G"]
    for i, r in enumerate(series.stations):
        for k, t in enumerate(series.ticks):
            lines.append(
                f"{r},{t},{series.arrived[i, k]:g},{series.departed[i, k]:g},"
                f"{series.stranded[i, k]:g},{series.instantaneous[i, k]:g}"
            )
    return "\n".join(lines) + "\n"


def terminal_events_csv(series: AccumulationSeries) -> str:
    lines = ["flow,station,t,count,kind"]
    for ev in series.terminal_events:
        lines.append(f"{ev.flow},{ev.station},{ev.time:g},{ev.count:g},{ev.kind}")
    return "\n".join(lines) + "\n"


def summary_text(solution: Stage1Solution, inputs: Stage1Inputs) -> str:
    st = solution.timetable.stats
    total = st.total[0] + st.total[1]
    affected = st.conflicting[0] + st.conflicting[1]
    canceled = st.canceled[0] + st.canceled[1]
    share = 100.0 * affected / total if total else 0.0
    lines = [
        "stage 1 summary",
        f"  services: {total} ({st.total[1]} positive, {st.total[0]} negative)",
        f"  conflicting: {affected} ({share:.1f}% of services rescheduled or canceled)",
        f"  canceled: {canceled} ({st.canceled[1]} positive, {st.canceled[0]} negative)",
        f"  turnarounds executed: {st.turned[1]} positive parents, {st.turned[0]} negative parents",
    ]
    for direction, label in ((1, "positive"), (0, "negative")):
        rec = st.recovery_min[direction]
        lines.append(
            f"  recovery time {label}: " + (f"{rec:g} min" if rec is not None else "n/a")
        )
    lines.append(f"  objective: {solution.objective:g}")
    lines.append(
        f"  big-M: objective {solution.stats['big_m_objective']:g}, "
        f"time {solution.stats['big_m_time']:g}"
    )
    stranded_total = sum(solution.stranded.values())
    lines.append(f"  stranded passengers: {stranded_total}")
    return "\n".join(lines) + "\n"
