"""
Result tables as CSV or JSON text.

CSV: one header row, floats with 17 significant digits, complex cells split
into ``<column>_re`` / ``<column>_im``. Several tables are written as blocks,
each introduced by a ``# <name>`` line and separated by a blank line.
JSON: the pydantic dump of the table (or of a bundle of tables).
"""
from __future__ import annotations

import csv
import io
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, computed_field

from app.cli.schema import Cell, ResultTable
from app.core.logging import get_logger
from app.services.convergence import ConvergenceReport

logger = get_logger(__name__)

REPORT_COLUMNS = [
    "n",
    "form_error",
    "dimW_n",
    "dimVcap_n",
    "delta_W",
    "delta_W_rev",
    "proj_error_W",
    "delta_Vcap",
    "delta_Vcap_rev",
    "proj_error_Vcap",
]


class ResultBundle(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    tables: list[ResultTable]

    @computed_field
    @property
    def ok(self) -> bool:
        return all(t.ok for t in self.tables)


def _plain(value) -> Cell | complex:
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return complex(value)
    return float(value)


def expand_complex(columns: Sequence[str], rows: Sequence[Sequence]) -> tuple[list[str], list[list[Cell]]]:
    """Replace every column holding a complex value by a (re, im) column pair."""
    rows = [[_plain(v) for v in row] for row in rows]
    split = {i for i in range(len(columns)) if any(isinstance(r[i], complex) for r in rows)}
    out_columns: list[str] = []
    for i, name in enumerate(columns):
        out_columns += [f"{name}_re", f"{name}_im"] if i in split else [name]
    out_rows = []
    for row in rows:
        out = []
        for i, v in enumerate(row):
            if i not in split:
                out.append(v)
            elif v is None:
                out += [None, None]
            else:
                z = complex(v)
                out += [z.real, z.imag]
        out_rows.append(out)
    return out_columns, out_rows


def make_table(name: str, columns: Sequence[str], rows: Sequence[Sequence] = ()) -> ResultTable:
    cols, cells = expand_complex(columns, rows)
    return ResultTable(name=name, columns=cols, rows=cells)


def table_from_report(report: ConvergenceReport) -> ResultTable:
    """One row per n; the limit values go to ``meta``."""
    columns = (
        REPORT_COLUMNS
        + [f"resolvent_error_s={s:g}" for s in report.s_values]
        + ["lower_bound_n"]
        + [f"semigroup_error_t={t:g}" for t in report.t_values]
        + ["witness_error"]
    )

    def padded(values: list[float], width: int) -> list:
        return list(values) + [None] * (width - len(values))

    rows = []
    for rec in report.records:
        rows.append(
            [getattr(rec, c) for c in REPORT_COLUMNS]
            + padded(rec.resolvent_error, len(report.s_values))
            + [rec.lower_bound_n]
            + padded(rec.semigroup_error, len(report.t_values))
            + [rec.witness_error]
        )
    table = make_table(report.name, columns, rows)
    table.checks = list(report.checks)
    if report.limit is not None:
        table.meta = {
            "limit_dimW": report.limit.dimW,
            "limit_dimVcap": report.limit.dimVcap,
            "limit_lower_bound": report.limit.lower_bound,
        }
    return table


def _format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_format_cell(v) for v in row])
    return buf.getvalue()


def to_json(table: ResultTable) -> str:
    return table.model_dump_json(indent=2) + "\n"


def render(tables: Sequence[ResultTable], fmt: str) -> str:
    if fmt == "json":
        if len(tables) == 1:
            return to_json(tables[0])
        return ResultBundle(tables=list(tables)).model_dump_json(indent=2) + "\n"
    if len(tables) == 1:
        return to_csv(tables[0])
    return "\n".join(f"# {t.name}\n{to_csv(t)}" for t in tables)


def log_checks(tables: Sequence[ResultTable]) -> None:
    for t in tables:
        for c in t.checks:
            if c.asserted and not c.passed:
                logger.warning(f"{t.name}: check {c.name} failed ({c.detail})")


def write_output(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        logger.info(f"Wrote {len(text)} bytes to {out}")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
