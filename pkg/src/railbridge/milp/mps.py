"""Fixed-format MPS export and import.

Column layout (1-indexed, documented contract of this writer):

  field 1  cols  2-3    row sense / bound type
  field 2  cols  5-12   first name (8 chars)
  field 3  cols 15-22   second name (8 chars)
  field 4  cols 25-40   numeric value (16 chars, %.9E)
  field 5  cols 45-52   third name
  field 6  cols 55-70   second numeric value (unused: one entry per line)

Rows are named R%07d in declaration order, columns X%07d, the objective row
is COST, the right-hand-side set RHS and the bound set BND.  Integer and
binary columns are wrapped in 'MARKER' INTORG/INTEND lines and every
variable gets explicit bound lines, so reader-side defaults never apply.
RANGES sections are not produced and are rejected on import.
"""

from __future__ import annotations

import math
from pathlib import Path

from .core import BINARY, CONTINUOUS, EQ, GE, INF, INTEGER, LE, LinearModel

_SENSE_OUT = {LE: "L", GE: "G", EQ: "E"}
_SENSE_IN = {"L": LE, "G": GE, "E": EQ}


def _line(f1: str, f2: str, f3: str = "", f4: float | None = None) -> str:
    out = f" {f1:<2} {f2:<8}"
    if f3 or f4 is not None:
        out += f"  {f3:<8}"
    if f4 is not None:
        out += f"  {f4:<16.9E}"
    return out.rstrip()


def export_mps(model: LinearModel, path: str | Path) -> None:
    model.validate()
    rows = [f"R{i + 1:07d}" for i in range(model.n_rows)]
    cols = [f"X{j + 1:07d}" for j in range(model.n_vars)]

    out: list[str] = [f"NAME          {model.name[:8].upper() or 'MODEL'}"]
    out.append("ROWS")
    out.append(" N  COST")
    for i, con in enumerate(model.constraints):
        out.append(f" {_SENSE_OUT[con.sense]}  {rows[i]}")

    # column-major coefficient lists
    by_col: list[list[tuple[str, float]]] = [[] for _ in range(model.n_vars)]
    for i, con in enumerate(model.constraints):
        for j, a in con.coeffs.items():
            if a != 0.0:
                by_col[j].append((rows[i], a))

    out.append("COLUMNS")
    in_integer = False
    marker_id = 0
    for j, var in enumerate(model.variables):
        wants_integer = var.kind in (BINARY, INTEGER)
        if wants_integer != in_integer:
            marker_id += 1
            tag = "'INTORG'" if wants_integer else "'INTEND'"
            out.append(f"    M{marker_id:07d}  'MARKER'  {tag}")
            in_integer = wants_integer
        if var.obj != 0.0:
            out.append("  " + _line("", cols[j], "COST", var.obj))
        for row_name, a in by_col[j]:
            out.append("  " + _line("", cols[j], row_name, a))
        if not by_col[j] and var.obj == 0.0:
            out.append("  " + _line("", cols[j], "COST", 0.0))
    if in_integer:
        marker_id += 1
        out.append(f"    M{marker_id:07d}  'MARKER'  'INTEND'")

    out.append("RHS")
    for i, con in enumerate(model.constraints):
        if con.rhs != 0.0:
            out.append("  " + _line("", "RHS", rows[i], con.rhs))

    out.append("BOUNDS")
    for j, var in enumerate(model.variables):
        if var.lb == var.ub:
            out.append(_line("FX", "BND", cols[j], var.lb))
            continue
        if math.isinf(var.lb):
            out.append(_line("MI", "BND", cols[j]))
        else:
            out.append(_line("LO", "BND", cols[j], var.lb))
        if math.isinf(var.ub):
            out.append(_line("PL", "BND", cols[j]))
        else:
            out.append(_line("UP", "BND", cols[j], var.ub))
    out.append("ENDATA")
    Path(path).write_text("\n".join(out) + "\n")


class MpsError(ValueError):
    pass


def import_mps(path: str | Path) -> LinearModel:
    """Parse a file written by export_mps back into a LinearModel."""
    text = Path(path).read_text().splitlines()
    model = LinearModel("imported")
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row: str | None = None
    col_kind: dict[str, str] = {}
    col_coeffs: dict[str, dict[str, float]] = {}
    col_obj: dict[str, float] = {}
    col_order: list[str] = []
    rhs: dict[str, float] = {}
    bounds: dict[str, list[float]] = {}
    in_integer = False

    for raw in text:
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        if not raw.startswith(" "):
            head = raw.split()[0].upper()
            if head in ("NAME", "ENDATA"):
                section = None
                if head == "ENDATA":
                    break
                continue
            if head == "RANGES":
                raise MpsError("RANGES sections are not supported")
            section = head
            continue
        fields = raw.split()
        if section == "ROWS":
            sense, name = fields[0].upper(), fields[1]
            if sense == "N":
                if obj_row is None:
                    obj_row = name
                continue
            if sense not in _SENSE_IN:
                raise MpsError(f"unknown row sense {sense!r}")
            row_sense[name] = _SENSE_IN[sense]
            row_order.append(name)
        elif section == "COLUMNS":
            if "'MARKER'" in fields:
                if "'INTORG'" in fields:
                    in_integer = True
                elif "'INTEND'" in fields:
                    in_integer = False
                continue
            col = fields[0]
            if col not in col_coeffs:
                col_coeffs[col] = {}
                col_obj[col] = 0.0
                col_order.append(col)
                col_kind[col] = INTEGER if in_integer else CONTINUOUS
            for name, value in zip(fields[1::2], fields[2::2]):
                v = float(value)
                if name == obj_row:
                    col_obj[col] += v
                elif name in row_sense:
                    col_coeffs[col][name] = col_coeffs[col].get(name, 0.0) + v
                else:
                    raise MpsError(f"coefficient references unknown row {name}")
        elif section == "RHS":
            for name, value in zip(fields[1::2], fields[2::2]):
                rhs[name] = float(value)
        elif section == "BOUNDS":
            btype = fields[0].upper()
            col = fields[2]
            entry = bounds.setdefault(col, [0.0, INF])
            if btype == "FX":
                entry[0] = entry[1] = float(fields[3])
            elif btype == "LO":
                entry[0] = float(fields[3])
            elif btype == "UP":
                entry[1] = float(fields[3])
            elif btype == "MI":
                entry[0] = -INF
            elif btype == "PL":
                entry[1] = INF
            elif btype == "BV":
                entry[0], entry[1] = 0.0, 1.0
            else:
                raise MpsError(f"unsupported bound type {btype}")
        elif section is None:
            continue
        else:
            raise MpsError(f"unexpected section {section}")

    for col in col_order:
        lb, ub = bounds.get(col, [0.0, INF])
        kind = col_kind[col]
        if kind == INTEGER and lb == 0.0 and ub == 1.0:
            kind = BINARY
        model.add_variable(col, kind, lb, ub, col_obj[col])
    for name in row_order:
        coeffs = {}
        for col in col_order:
            a = col_coeffs[col].get(name)
            if a is not None:
                coeffs[model.var_index(col)] = a
        model.add_constraint(name, coeffs, row_sense[name], rhs.get(name, 0.0))
    return model
