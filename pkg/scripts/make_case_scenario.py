#!/usr/bin/env python3
"""Deterministic generator for the 13-station case fixture.

The published study this fixture mirrors never released its demand data, so
the timetable and flows here are reconstructed to the same shape: 13
stations, 58 positive and 60 negative services between 07:20 and 09:30, a
07:43-09:00-ish conflict band around the 08:00-09:00 blockage of stations
4-10, crossing demand heavy enough to pile up several hundred passengers
per minute at the boundary terminals, and a two-direction arterial road
with a bypass and four fixed-time signals.

Run from the repository root:

    python scripts/make_case_scenario.py [out.json]

The output is committed as scenarios/case_line13.json; tests assert the
frozen shape statistics printed at the end.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
HORIZON = ("07:20", "09:30")
WINDOW = ("08:00", "09:00")
N_STATIONS = 13
RUNTIME = 2  # minutes per section
S_BEGIN, S_END = 4, 10


def hhmm(m: int) -> str:
    return f"{m // 60:02d}:{m % 60:02d}"


def cumdeps(start: int, pattern: list[int], count: int) -> list[int]:
    out = [start]
    k = 0
    while len(out) < count:
        out.append(out[-1] + pattern[k % len(pattern)])
        k += 1
    return out


def departures() -> tuple[list[int], list[int]]:
    # positive: 16 ahead of the conflict band, 31 inside, 11 after
    pos = (
        cumdeps(440, [1, 2], 16)          # 07:20 .. 07:42
        + cumdeps(463, [2, 2, 3], 31)     # 07:43 .. 08:53 (conflict band)
        + cumdeps(534, [1, 1, 1, 2], 11)  # 08:54 .. 09:06
    )
    # negative: 18 ahead, 29 inside, 13 after
    neg = (
        cumdeps(440, [1, 1, 2], 18)
        + cumdeps(463, [2, 3], 29)
        + cumdeps(534, [1], 13)
    )
    assert len(pos) == 58 and len(neg) == 60
    assert max(pos) + 24 <= 570 and max(neg) + 24 <= 570
    return pos, neg


def service(sid: str, direction: int, start: int) -> dict:
    stops = []
    stations = range(1, N_STATIONS + 1) if direction == 1 else range(N_STATIONS, 0, -1)
    t = start
    prev = None
    for r in stations:
        if prev is not None:
            t += RUNTIME
        stops.append({"station": r, "arr": hhmm(t), "dep": hhmm(t)})
        prev = r
    return {"id": sid, "direction": direction, "stops": stops}


def flows() -> list[dict]:
    rng = random.Random(20240817)
    out: list[dict] = []
    fid = 0

    def add(origin: int, dest: int, produced: int, size: int):
        nonlocal fid
        fid += 1
        out.append(
            {
                "id": f"P{fid:04d}",
                "origin": origin,
                "destination": dest,
                "produced": hhmm(produced),
                "size": size,
                "direction": 1 if origin < dest else 0,
            }
        )

    east_dests = [5, 6, 7, 8, 9, 10, 11, 12, 13]
    west_dests = [9, 8, 7, 6, 5, 4, 3, 2, 1]

    # crossing demand, three origins per side, every 3 minutes
    k = 0
    for produced in range(440, 531, 3):
        for origin in (1, 2, 3):
            add(origin, east_dests[k % len(east_dests)], produced, rng.randint(220, 350))
            k += 1
    k = 0
    for produced in range(440, 531, 3):
        for origin in (13, 12, 11):
            dest = west_dests[k % len(west_dests)]
            if dest >= origin:
                dest = origin - 1
            add(origin, dest, produced, rng.randint(210, 340))
            k += 1

    # local demand inside each operational side
    for produced in range(442, 561, 6):
        add(1, rng.choice([2, 3, 4]), produced, rng.randint(30, 90))
        add(rng.choice([2, 3]), 4, produced, rng.randint(20, 60))
        add(13, rng.choice([12, 11, 10]), produced, rng.randint(30, 90))
        add(rng.choice([12, 11]), 10, produced, rng.randint(20, 60))

    # boundary-terminal origins (stranded during the window, riders outside it)
    k = 0
    for produced in range(441, 561, 3):
        add(4, east_dests[k % len(east_dests)], produced, rng.randint(40, 90))
        dest = west_dests[(k + 3) % len(west_dests)]
        add(10, dest if dest < 10 else 9, produced, rng.randint(40, 90))
        k += 1
    return out


def road() -> dict:
    segments = []

    def seg(sid, a, b, length):
        segments.append({"id": sid, "from": a, "to": b, "length_m": length, "lanes": 1})

    # eastbound main: two 400 m cells per station spacing
    for r in range(4, 10):
        seg(f"E{r}{r + 1}", f"n{r}", f"n{r + 1}", 800)
    # westbound main
    for r in range(10, 4, -1):
        seg(f"W{r}{r - 1}", f"n{r}", f"n{r - 1}", 800)
    # bypass pair between stations 5 and 8 (seven cells each way)
    seg("B58", "n5", "n8", 2800)
    seg("B85", "n8", "n5", 2800)

    return {
        "dt_seconds": 20,
        "horizon_steps": 320,
        "segments": segments,
        "station_anchors": [{"station": r, "node": f"n{r}"} for r in range(4, 11)],
        "signals": [
            {"cell": 3, "cycle": 5, "green": 2, "offset": 0},
            {"cell": 4, "cycle": 5, "green": 2, "offset": 0},
            {"cell": 11, "cycle": 5, "green": 2, "offset": 4},
            {"cell": 20, "cycle": 5, "green": 2, "offset": 4},
        ],
    }


def build() -> dict:
    pos, neg = departures()
    services = [service(f"U{k + 1:03d}", 1, t) for k, t in enumerate(pos)]
    services += [service(f"D{k + 1:03d}", 0, t) for k, t in enumerate(neg)]
    return {
        "line": {
            "stations": [
                {"id": r, "turnback": r in (1, 4, 10, 13)} for r in range(1, N_STATIONS + 1)
            ],
            "sections": [
                {"from": a, "to": b, "runtime_min": RUNTIME}
                for r in range(1, N_STATIONS)
                for a, b in ((r, r + 1), (r + 1, r))
            ],
            "dwell_min": {str(r): 0 for r in range(1, N_STATIONS + 1)},
            "train_capacity": 1000,
            "turnback_min": 3,
        },
        "services": services,
        "flows": flows(),
        "disruption": {"station_begin": S_BEGIN, "station_end": S_END, "window": list(WINDOW)},
        "horizon": list(HORIZON),
        "headways": {"aa": 1, "ad": 1, "da": 1, "dd": 1},
        "road": road(),
        "vehicle": {
            "capacity": 40,
            "length_m": 12,
            "free_flow_mps": 20,
            "wave_mps": 10,
            "dispatch_period_min": 5,
            "max_flow_vph_per_lane": 1992,
        },
        "solver": {"eps": 1e-6, "eps_int": 1e-6, "engine": "auto", "threads": 1, "seed": 0},
    }


def main() -> None:
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "scenarios" / "case_line13.json"
    data = build()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(data, indent=1) + "\n")

    # shape diagnostics
    sys.path.insert(0, str(ROOT / "src"))
    from railbridge.model import load_scenario, validate_scenario
    from railbridge.disruption import build_area, classify_services, detect_conflict
    from railbridge.reschedule import prepare_stage1

    scenario = load_scenario(out_path)
    report = validate_scenario(scenario)
    print("validation:", "ok" if report.ok else report.render())
    area = build_area(scenario.disruption, scenario.line)
    pos_conf = sum(
        detect_conflict(s, area) for s in scenario.services if s.direction == 1
    )
    neg_conf = sum(
        detect_conflict(s, area) for s in scenario.services if s.direction == 0
    )
    part = classify_services(scenario.services, area)
    inputs = prepare_stage1(scenario)
    print(f"services: 58 positive / 60 negative, flows: {len(scenario.flows)}")
    print(f"conflicting (linked to turnarounds): {pos_conf} positive, {neg_conf} negative")
    print(
        f"classification: before={len(part.before)} during={len(part.during)} "
        f"after={len(part.after)}  share={100 * len(part.during) / 118:.1f}%"
    )
    clash_pairs = {(u, v) for (u, v, _r) in inputs.indicators.headway_clash}
    print(f"headway clash pairs: {len(clash_pairs)}")
    forced = set()
    for (u, v, r) in inputs.indicators.headway_clash:
        if inputs.conflict.get(u, 0) == 0:
            forced.add(v[:-2])
    print(f"parents forced to cancel by clashes with protected services: {sorted(forced)}")
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
