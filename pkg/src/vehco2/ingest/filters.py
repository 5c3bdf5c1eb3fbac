"""Row filters applied to raw and harmonized telemetry tables.

All filters take a :class:`pandas.DataFrame` whose columns already carry the
internal names (``trip``, ``time``, and the harmonized channel names) and
return the surviving rows, in their original order, together with a
:class:`FilterReport`. Every filter is idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..schema import EmptyTripError

FFILL_LIMIT = 50

STRICT_BOUNDS = {
    "velocity": (0.0, 250.0),
    "throttle": (0.0, 100.0),
    "motor_torque": (0.0, 1200.0),
    "ambient_temp": (-40.0, 125.0),
    "cabin_temp": (-40.0, 125.0),
    "heat_exchanger_temp": (-40.0, 125.0),
}
STRICT_MAX_ABS_ACCEL = 10.0
IQR_K = 3.0
IQR_CHANNELS = (
    "velocity",
    "throttle",
    "motor_torque",
    "ambient_temp",
    "cabin_temp",
    "longitudinal_accel",
    "co2_rate",
)


@dataclass
class FilterReport:
    rows_in: int = 0
    rows_dropped_by_rule: dict[str, int] = field(default_factory=dict)
    trips_dropped: list[str] = field(default_factory=list)
    rejected_files: dict[str, str] = field(default_factory=dict)

    @property
    def rows_dropped(self) -> int:
        return sum(self.rows_dropped_by_rule.values())

    @property
    def rows_out(self) -> int:
        return self.rows_in - self.rows_dropped

    def drop(self, rule: str, n: int) -> None:
        self.rows_dropped_by_rule[rule] = self.rows_dropped_by_rule.get(rule, 0) + int(n)

    def merge(self, other: FilterReport) -> FilterReport:
        out = FilterReport(self.rows_in + other.rows_in,
                           dict(self.rows_dropped_by_rule),
                           self.trips_dropped + [t for t in other.trips_dropped
                                                 if t not in self.trips_dropped],
                           {**self.rejected_files, **other.rejected_files})
        for rule, n in other.rows_dropped_by_rule.items():
            out.drop(rule, n)
        return out

    def chain(self, later: FilterReport) -> FilterReport:
        """Combine with a report of a filter run on this report's output."""
        if later.rows_in != self.rows_out:
            raise ValueError("reports do not chain: row counts differ")
        out = self.merge(later)
        out.rows_in = self.rows_in
        return out

    def to_text(self, header: dict | None = None) -> str:
        lines = [f"# {k}={v}" for k, v in (header or {}).items()]
        lines.append(f"rows_in = {self.rows_in}")
        lines.append(f"rows_out = {self.rows_out}")
        for rule in sorted(self.rows_dropped_by_rule):
            lines.append(f"dropped.{rule} = {self.rows_dropped_by_rule[rule]}")
        lines.append(f"trips_dropped = {','.join(self.trips_dropped)}")
        for name in sorted(self.rejected_files):
            lines.append(f"rejected_file = {name}: {self.rejected_files[name]}")
        return "\n".join(lines) + "\n"


def _apply(df: pd.DataFrame, keep: np.ndarray, rule: str, report: FilterReport) -> pd.DataFrame:
    n_drop = int((~keep).sum())
    if n_drop:
        report.drop(rule, n_drop)
        df = df.loc[keep]
    return df


class _Mask:
    """Running row mask; each rule counts only rows not removed by earlier rules."""

    def __init__(self, n: int, report: FilterReport):
        self.alive = np.ones(n, dtype=bool)
        self.report = report

    def rule(self, name: str, reject) -> None:
        hit = self.alive & np.asarray(reject, dtype=bool)
        if hit.any():
            self.report.drop(name, int(hit.sum()))
            self.alive &= ~hit

    def apply(self, df: pd.DataFrame) -> pd.DataFrame:
        return df if self.alive.all() else df.loc[self.alive]


def _finish(df_in: pd.DataFrame, df: pd.DataFrame, report: FilterReport) -> pd.DataFrame:
    if "trip" in df_in.columns:
        before = df_in["trip"].to_numpy()
        after = set(df["trip"].to_numpy().tolist())
        if len(after) < len(set(before.tolist())):
            seen = dict.fromkeys(t for t in before.tolist() if not pd.isna(t))
            report.trips_dropped.extend(str(t) for t in seen if t not in after)
    if len(df) == 0:
        raise EmptyTripError("all rows were dropped by the filters")
    return df


def forward_fill_ids(ids: pd.Series, limit: int = FFILL_LIMIT) -> pd.Series:
    return ids.ffill(limit=limit)


def integrity_filter(df: pd.DataFrame, nonnegative=("engine_torque", "tractive_force"),
                     ffill_limit: int = FFILL_LIMIT):
    """Basic integrity rules for raw rows.

    In order: forward-fill trip ids over gaps of at most ``ffill_limit`` rows
    and drop rows still unresolved; drop negative time; drop negative values of
    each ``nonnegative`` column present; within each trip keep only rows whose
    time is strictly greater than every earlier kept time (duplicates and
    backwards steps are counted separately).
    """
    report = FilterReport(rows_in=len(df))
    mask = _Mask(len(df), report)
    out = df
    if "trip" in out.columns and out["trip"].isna().any():
        out = out.assign(trip=forward_fill_ids(out["trip"], ffill_limit))
    groups = out["trip"].to_numpy() if "trip" in out.columns else np.zeros(len(out))
    if "trip" in out.columns:
        mask.rule("unresolved_trip_id", pd.isna(groups))
    t = out["time"].to_numpy(dtype=np.float64)
    with np.errstate(invalid="ignore"):
        mask.rule("negative_time", (t < 0) | np.isnan(t))
        for col in nonnegative:
            if col in out.columns:
                mask.rule(f"negative_{col}", out[col].to_numpy(dtype=np.float64) < 0)

    # among surviving rows, one survives only if it is later than every earlier row of its trip
    alive = np.flatnonzero(mask.alive)
    codes = pd.factorize(groups[alive])[0]
    ta = t[alive]
    prev_max = np.full(len(alive), np.nan)
    for code in np.unique(codes):
        idx = np.flatnonzero(codes == code)
        prev_max[idx[1:]] = np.maximum.accumulate(ta[idx])[:-1]
    dup = np.zeros(len(df), dtype=bool)
    late = np.zeros(len(df), dtype=bool)
    dup[alive] = ta == prev_max
    late[alive] = ta < prev_max
    mask.rule("duplicate_time", dup)
    mask.rule("non_increasing_time", late)
    return _finish(df, mask.apply(out), report), report


def drop_missing(df: pd.DataFrame, columns, rule: str = "missing_values"):
    report = FilterReport(rows_in=len(df))
    present = [c for c in columns if c in df.columns]
    keep = df[present].notna().all(axis=1).to_numpy() if present else np.ones(len(df), bool)
    out = _apply(df, keep, rule, report)
    return _finish(df, out, report), report


def threshold_filter(df: pd.DataFrame, rules: dict[str, tuple]):
    """Drop rows by simple comparisons: ``{rule_name: (column, op, value)}``.

    ``op`` is one of ``">=", ">", "<=", "<"`` and describes the rows removed.
    NaN never matches.
    """
    report = FilterReport(rows_in=len(df))
    out = df
    ops = {">=": np.greater_equal, ">": np.greater, "<=": np.less_equal, "<": np.less}
    for rule, (col, op, value) in rules.items():
        if col not in out.columns:
            continue
        x = out[col].to_numpy(dtype=np.float64)
        with np.errstate(invalid="ignore"):
            out = _apply(out, ~ops[op](x, value), rule, report)
    return _finish(df, out, report), report


def quantile7(x, q) -> np.ndarray:
    """Quantiles by linear interpolation between order statistics (type 7)."""
    return np.quantile(np.asarray(x, dtype=np.float64), q, method="linear")


def iqr_fences(x, k: float = IQR_K) -> tuple[float, float]:
    q1, q3 = quantile7(x, [0.25, 0.75])
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


def _nan_fences(x: np.ndarray, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-column IQR fences of a 2-D block, ignoring NaN. All-NaN columns get (nan, nan)."""
    if np.isfinite(x).all():
        if len(x) == 0:
            return np.full(x.shape[1], np.nan), np.full(x.shape[1], np.nan)
        q1, q3 = np.quantile(x, [0.25, 0.75], axis=0, method="linear")
        return q1 - k * (q3 - q1), q3 + k * (q3 - q1)
    lo = np.full(x.shape[1], np.nan)
    hi = np.full(x.shape[1], np.nan)
    for j in range(x.shape[1]):
        col = x[:, j]
        col = col[np.isfinite(col)]
        if col.size:
            lo[j], hi[j] = iqr_fences(col, k)
    return lo, hi


def strict_filter(df: pd.DataFrame, bounds: dict | None = None,
                  max_abs_accel: float = STRICT_MAX_ABS_ACCEL,
                  iqr_channels=IQR_CHANNELS, k: float = IQR_K):
    """Strict variant on harmonized rows (whole dataset at once).

    (a) physical bounds and CO2 > 0, (b) ``|a| > max_abs_accel`` removed,
    (c) global IQR fences with factor ``k`` per channel, no winsorizing. The
    IQR rule is repeated until no further row falls outside the fences, so a
    second application of the filter removes nothing. Channels with zero IQR
    are skipped, since their fences would exclude every non-modal value.
    """
    bounds = STRICT_BOUNDS if bounds is None else bounds
    report = FilterReport(rows_in=len(df))
    mask = _Mask(len(df), report)
    rule = mask.rule

    with np.errstate(invalid="ignore"):
        for col, (lo, hi) in bounds.items():
            if col in df.columns:
                x = df[col].to_numpy(dtype=np.float64)
                rule("bounds", (x < lo) | (x > hi))
        if "co2_rate" in df.columns:
            rule("bounds", df["co2_rate"].to_numpy(dtype=np.float64) <= 0)
        if "longitudinal_accel" in df.columns:
            a = df["longitudinal_accel"].to_numpy(dtype=np.float64)
            rule("accel_limit", np.abs(a) > max_abs_accel)

        cols = [c for c in iqr_channels if c in df.columns]
        if cols:
            x = df[cols].to_numpy(dtype=np.float64)
            while mask.alive.any():
                lo, hi = _nan_fences(x[mask.alive], k)
                bad = mask.alive & (((x < lo) | (x > hi)) & (hi > lo)).any(axis=1)
                if not bad.any():
                    break
                rule("iqr", bad)
    return _finish(df, mask.apply(df), report), report
