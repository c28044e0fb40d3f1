"""End-to-end pipeline: load -> reschedule -> map -> assign -> baseline.

Each stage turns its upstream artifacts into CSV/text artifacts in the
output directory.  Artifacts are written with a ``.partial`` suffix and
renamed on stage success, so an interrupted stage leaves its partial files
behind.  ``run_pipeline`` additionally writes ``summary.txt`` (the
concatenated stage summaries) and ``run_manifest.json`` (written before the
first solve, rewritten with artifact checksums on completion).

Solver wall times and timestamps never enter stage artifacts: two runs with
the same scenario and seed produce byte-identical artifact sets.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

from . import mapping as mapping_mod
from . import reschedule as rs
from .ctm import baseline as baseline_mod
from .ctm import network as net_mod
from .ctm import sodta as sodta_mod
from .disruption import dump_indicators_csv
from .mapping import DemandMatrix, VehicleClass
from .milp.mps import export_mps
from .model import Scenario, ScenarioError, load_scenario, validate_scenario
from .reschedule import TerminalEvent

STAGES = ("reschedule", "map", "sodta", "baseline")

EXIT_OK = 0
EXIT_STAGE1_INFEASIBLE = 2
EXIT_STAGE2_UNREACHABLE = 3
EXIT_IO = 4
EXIT_CONFIG = 5


class StageError(RuntimeError):
    def __init__(self, stage: str, exit_code: int, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


@dataclass
class RunOptions:
    scenario_path: Path
    out_dir: Path
    stage: str = "all"
    seed: int | None = None
    threads: int | None = None
    eps: float | None = None
    engine: str | None = None
    export_mps: bool = False
    dump_indicators: bool = False
    baseline_route_file: Path | None = None


class ArtifactWriter:
    """Writes stage artifacts as .partial files, finalized on stage success."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.pending: list[tuple[Path, Path]] = []

    def write(self, name: str, content: str) -> None:
        final = self.out_dir / name
        partial = self.out_dir / (name + ".partial")
        partial.write_text(content)
        self.pending.append((partial, final))

    def finalize(self) -> list[Path]:
        done = []
        for partial, final in self.pending:
            partial.replace(final)
            done.append(final)
        self.pending.clear()
        return done


def _load(options: RunOptions) -> Scenario:
    try:
        scenario = load_scenario(options.scenario_path)
    except ScenarioError as exc:
        raise StageError("load", EXIT_IO, str(exc)) from exc
    report = validate_scenario(scenario)
    if not report.ok:
        raise StageError("load", EXIT_CONFIG, "invalid scenario:\n" + report.render())
    solver = scenario.solver
    if options.seed is not None:
        solver = solver.replace(seed=options.seed)
    if options.threads is not None:
        solver = solver.replace(threads=options.threads)
    if options.eps is not None:
        solver = solver.replace(eps=options.eps)
    if options.engine is not None:
        solver = solver.replace(engine=options.engine)
    return Scenario(**{**scenario.__dict__, "solver": solver})


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------


def stage_reschedule(scenario: Scenario, out: ArtifactWriter, options: RunOptions) -> None:
    inputs = rs.prepare_stage1(scenario)
    sm = rs.build_stage1(inputs, weight_wait_by_size=scenario.solver.weight_wait_by_size)
    if options.export_mps:
        mps_path = out.out_dir / "stage1.mps.partial"
        export_mps(sm.model, mps_path)
        out.pending.append((mps_path, out.out_dir / "stage1.mps"))
    if options.dump_indicators:
        out.write("indicators.csv", dump_indicators_csv(inputs.indicators))
    try:
        solution = rs.solve_stage1(sm, scenario.solver)
    except rs.Stage1Infeasible as exc:
        raise StageError("reschedule", EXIT_STAGE1_INFEASIBLE, str(exc)) from exc
    out.write("timetable.csv", rs.timetable_csv(solution.timetable))
    out.write("accumulation.csv", rs.accumulation_csv(solution.series))
    out.write("terminal_events.csv", rs.terminal_events_csv(solution.series))
    out.write("stage1_summary.txt", _stage1_summary(solution, inputs))


def _stage1_summary(solution: rs.Stage1Solution, inputs: rs.Stage1Inputs) -> str:
    body = rs.summary_text(solution, inputs)
    lines = [body.rstrip(), "  per-station averages over the disruption window:"]
    for r in solution.series.stations:
        lines.append(
            f"    station {r}: arrivals/min {solution.series.arrivals_per_min[r]:.3g}, "
            f"avg wait {solution.series.avg_wait_min[r]:.3g} min"
        )
    return "\n".join(lines) + "\n"


def _read_terminal_events(out_dir: Path) -> list[TerminalEvent]:
    path = out_dir / "terminal_events.csv"
    if not path.exists():
        raise StageError("map", EXIT_IO, f"missing upstream artifact {path}")
    events = []
    for line in path.read_text().splitlines()[1:]:
        if not line.strip():
            continue
        flow, station, t, count, kind = line.split(",")
        events.append(TerminalEvent(flow, int(station), float(t), float(count), kind))
    return events


def stage_map(scenario: Scenario, out: ArtifactWriter, options: RunOptions) -> None:
    from .disruption import build_area

    area = build_area(scenario.disruption, scenario.line)
    events = _read_terminal_events(out.out_dir)
    try:
        classes = mapping_mod.derive_classes(scenario.flows, events, area)
        matrix = mapping_mod.demand_map(
            events,
            scenario.flows,
            classes,
            area,
            vehicle_capacity=scenario.vehicle.capacity,
            period_min=scenario.vehicle.dispatch_period_min,
        )
        network = _build_case_network(scenario, classes)
        bindings = net_mod.bind_classes(network, classes)
    except (mapping_mod.MappingError, net_mod.NetworkError) as exc:
        raise StageError("map", EXIT_CONFIG, str(exc)) from exc
    source_cells = {m: src for m, (src, _snk) in bindings.items()}
    out.write("classes.csv", _classes_csv(classes))
    out.write("demand.csv", mapping_mod.demand_csv(matrix, source_cells))


def _classes_csv(classes: list[VehicleClass]) -> str:
    lines = ["class,origin,destination"]
    for c in classes:
        lines.append(f"{c.id},{c.origin},{c.destination}")
    return "\n".join(lines) + "\n"


def _read_classes(out_dir: Path, stage: str) -> list[VehicleClass]:
    path = out_dir / "classes.csv"
    if not path.exists():
        raise StageError(stage, EXIT_IO, f"missing upstream artifact {path}")
    classes = []
    for line in path.read_text().splitlines()[1:]:
        if line.strip():
            m, o, d = line.split(",")
            classes.append(VehicleClass(int(m), int(o), int(d)))
    return classes


def _read_demand(out_dir: Path, scenario: Scenario, stage: str) -> DemandMatrix:
    path = out_dir / "demand.csv"
    if not path.exists():
        raise StageError(stage, EXIT_IO, f"missing upstream artifact {path}")
    entries: dict[tuple[int, int], int] = {}
    for line in path.read_text().splitlines()[1:]:
        if not line.strip():
            continue
        k, _cell, m, v = line.split(",")
        entries[(int(k), int(m))] = int(v)
    window = scenario.disruption.time_end - scenario.disruption.time_begin
    period = scenario.vehicle.dispatch_period_min
    import math

    return DemandMatrix(
        entries=entries,
        n_periods=max(1, math.ceil(window / period)),
        period_min=period,
        vehicle_capacity=scenario.vehicle.capacity,
        window_begin=scenario.disruption.time_begin,
    )


def _build_case_network(scenario: Scenario, classes: list[VehicleClass]):
    sources = sorted({c.origin for c in classes})
    sinks = sorted({c.destination for c in classes})
    return net_mod.build_network(scenario.road, scenario.vehicle, sources, sinks)


def stage_sodta(scenario: Scenario, out: ArtifactWriter, options: RunOptions) -> None:
    classes = _read_classes(out.out_dir, "sodta")
    matrix = _read_demand(out.out_dir, scenario, "sodta")
    try:
        network = _build_case_network(scenario, classes)
        bindings = net_mod.bind_classes(network, classes)
        demands = sodta_mod.demand_to_steps(matrix, bindings, scenario.road.dt_seconds)
        model, idx = sodta_mod.build_sodta(
            network, demands, horizon_steps=scenario.road.horizon_steps
        )
        solution = sodta_mod.solve_sodta(
            model, idx, network, engine=scenario.solver.engine, eps=scenario.solver.eps
        )
    except sodta_mod.UnreachableError as exc:
        raise StageError("sodta", EXIT_STAGE2_UNREACHABLE, str(exc)) from exc
    except (sodta_mod.SodtaInfeasible, net_mod.NetworkError) as exc:
        raise StageError("sodta", EXIT_STAGE2_UNREACHABLE, str(exc)) from exc
    out.write("curves.csv", sodta_mod.curves_csv(solution))
    out.write("nct.csv", sodta_mod.nct_csv(solution))
    out.write("cells.csv", sodta_mod.cells_csv(solution))
    out.write("ttt.csv", _ttt_csv(solution))
    out.write("stage2_summary.txt", _stage2_summary(solution))


def _ttt_csv(solution: sodta_mod.SodtaSolution) -> str:
    return (
        "metric,value\n"
        f"objective_steps,{solution.objective_steps:.6g}\n"
        f"ttt_min,{solution.total_travel_time_min:.6g}\n"
    )


def _stage2_summary(solution: sodta_mod.SodtaSolution) -> str:
    lines = [
        "stage 2 summary",
        f"  total travel time: {solution.total_travel_time_min:.6g} veh-min "
        f"({solution.objective_steps:.6g} veh-steps)",
        f"  horizon: {solution.T} steps of {solution.dt_seconds:g} s",
    ]
    if solution.nct_min:
        worst = max(solution.nct_min, key=lambda m: solution.nct_min[m])
        lines.append(
            f"  max network clearance time: {solution.nct_min[worst]:.6g} min (class {worst})"
        )
    for m in sorted(solution.nct_min):
        lines.append(
            f"    class {m}: {solution.fleet[m]} vehicles, NCT {solution.nct_min[m]:.6g} min"
        )
    return "\n".join(lines) + "\n"


def stage_baseline(scenario: Scenario, out: ArtifactWriter, options: RunOptions) -> None:
    classes = _read_classes(out.out_dir, "baseline")
    matrix = _read_demand(out.out_dir, scenario, "baseline")
    routes = None
    if options.baseline_route_file is not None:
        try:
            raw = json.loads(Path(options.baseline_route_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise StageError("baseline", EXIT_IO, f"cannot read route file: {exc}") from exc
        routes = {int(k): [int(c) for c in v] for k, v in raw.items()}
    try:
        network = _build_case_network(scenario, classes)
        bindings = net_mod.bind_classes(network, classes)
        demands = sodta_mod.demand_to_steps(matrix, bindings, scenario.road.dt_seconds)
        result, used_routes = baseline_mod.shortest_path_baseline(network, demands, routes)
    except (baseline_mod.BaselineError, net_mod.NetworkError) as exc:
        raise StageError("baseline", EXIT_STAGE2_UNREACHABLE, str(exc)) from exc
    dt = scenario.road.dt_seconds
    lines = ["class,vehicles,route,nct_min"]
    for cd in demands:
        route = "-".join(str(c) for c in used_routes[cd.class_id])
        lines.append(
            f"{cd.class_id},{cd.total},{route},{result.nct_min[cd.class_id]:.6g}"
        )
    out.write("baseline.csv", "\n".join(lines) + "\n")
    summary = [
        "baseline summary",
        f"  fixed-route total travel time: {result.total_travel_time_min(dt):.6g} veh-min "
        f"({result.ttt_steps:.6g} veh-steps)",
    ]
    ttt_path = out.out_dir / "ttt.csv"
    if ttt_path.exists():
        rows = dict(
            line.split(",") for line in ttt_path.read_text().splitlines()[1:] if line.strip()
        )
        sodta_ttt = float(rows["ttt_min"])
        base_ttt = result.total_travel_time_min(dt)
        if base_ttt > 0:
            gain = 100.0 * (base_ttt - sodta_ttt) / base_ttt
            summary.append(
                f"  assignment vs fixed route: {sodta_ttt:.6g} vs {base_ttt:.6g} veh-min "
                f"({gain:.3g}% lower)"
            )
    out.write("baseline_summary.txt", "\n".join(summary) + "\n")


_STAGE_FUNCS = {
    "reschedule": stage_reschedule,
    "map": stage_map,
    "sodta": stage_sodta,
    "baseline": stage_baseline,
}


def run_stage(stage: str, scenario: Scenario, out_dir: Path, options: RunOptions) -> list[Path]:
    if stage not in _STAGE_FUNCS:
        raise StageError(stage, EXIT_CONFIG, f"unknown stage {stage!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ArtifactWriter(out_dir)
    _STAGE_FUNCS[stage](scenario, writer, options)
    return writer.finalize()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(options: RunOptions) -> int:
    scenario = _load(options)
    out_dir = options.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = STAGES if options.stage == "all" else (options.stage,)

    manifest = {
        "scenario": str(options.scenario_path),
        "stages": list(stages),
        "out": str(out_dir),
        "solver": {
            "eps": scenario.solver.eps,
            "eps_int": scenario.solver.eps_int,
            "engine": scenario.solver.engine,
            "threads": scenario.solver.threads,
            "seed": scenario.solver.seed,
        },
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "artifacts": {},
    }
    manifest_path = out_dir / "run_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    produced: list[Path] = []
    for stage in stages:
        produced.extend(run_stage(stage, scenario, out_dir, options))

    if options.stage == "all":
        parts = []
        for name in ("stage1_summary.txt", "stage2_summary.txt", "baseline_summary.txt"):
            path = out_dir / name
            if path.exists():
                parts.append(path.read_text().rstrip())
        summary = out_dir / "summary.txt"
        summary.write_text("\n\n".join(parts) + "\n")
        produced.append(summary)

    manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    manifest["artifacts"] = {p.name: _sha256(p) for p in sorted(produced)}
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK
