"""Aggregate statistics, result tables and long-format plot data."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class AggregateStats:
    n: int
    mean: float
    median: float
    min: float
    max: float
    q1: float
    q3: float
    sample_std: float
    # True when n == 1 and sample_std was set to 0 by convention
    std_degenerate: bool = False

    @property
    def iqr(self) -> tuple[float, float]:
        return self.q1, self.q3

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate(values: Sequence[float]) -> AggregateStats:
    """Summary statistics with type-7 quantiles and the (n-1) standard deviation."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot aggregate an empty list")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    degenerate = x.size == 1
    # exactly rounded sums keep the result independent of input order
    mean = math.fsum(x) / x.size
    std = 0.0 if degenerate else math.sqrt(math.fsum((x - mean) ** 2) / (x.size - 1))
    return AggregateStats(int(x.size), mean, float(med), float(x.min()), float(x.max()),
                          float(q1), float(q3), std, degenerate)


# -- tables ---------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    name: str
    digits: int | None = None  # decimals; None writes the value as is


class TableSchemaError(ValueError):
    pass


TRIP_MAE_SCHEMA = (Column("Trip"), Column("CO2 MAE (g/s)", 3))
PROXY_SCHEMA = (
    Column("Trip"),
    Column("CO2 MAE (g/s)", 4),
    Column("Proxy MAE (g/s)", 4),
    Column("Torque MAE (Nm)", 3),
    Column("Throttle MAE (%)", 3),
)


def _cell(value, col: Column) -> str:
    if col.digits is None or isinstance(value, str):
        return str(value)
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{float(value):.{col.digits}f}"


def format_table(rows: Sequence[Sequence], schema: Sequence[Column], header: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c.name for c in schema])
    for row in rows:
        if len(row) != len(schema):
            raise TableSchemaError(f"row {row!r} has {len(row)} fields, schema has {len(schema)}")
        w.writerow([_cell(v, c) for v, c in zip(row, schema)])
    return buf.getvalue()


def emit_table(path, rows, schema=TRIP_MAE_SCHEMA, header: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(format_table(rows, schema, header), encoding="utf-8")
    return path


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def stats_rows(label: str, stats: AggregateStats) -> list[list]:
    return [[f"{label} {name}", getattr(stats, name)]
            for name in ("mean", "median", "min", "max", "q1", "q3", "sample_std")]


# -- plot data --------------------------------------------------------------

def plot_rows(x, **series) -> list[tuple[float, str, float]]:
    x = np.asarray(x, dtype=np.float64)
    rows = []
    for name, values in series.items():
        values = np.asarray(values, dtype=np.float64)
        if values.shape != x.shape:
            raise ValueError(f"series {name!r} has {values.shape[0] if values.ndim else 0} points, "
                             f"x has {x.shape[0]}")
        rows.extend((float(xi), name, float(vi)) for xi, vi in zip(x, values))
    return rows


def emit_plot_series(path, x, x_name: str = "time", header: dict | None = None, **series) -> Path:
    """Long-format ``x, series, value`` text for any plotting tool."""
    rows = plot_rows(x, **series)
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([x_name, "series", "value"])
    for xi, name, vi in rows:
        w.writerow([repr(xi), name, repr(vi)])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path
