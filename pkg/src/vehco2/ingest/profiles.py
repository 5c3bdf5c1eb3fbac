"""Vehicle adapters: raw source tables -> harmonized :class:`~vehco2.schema.Trip` lists.

Source headers are matched after normalization (lower case, only letters and
digits kept), so ``Dyno_Spd[mph]``, ``Dyno_Spd__mph`` and ``Dyno Spd [mph]``
all resolve to the same column. The accepted names per profile are listed in
``SOURCE_COLUMNS`` and documented in the README.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .. import emissions
from ..emissions import EmissionFactors
from ..schema import CHANNELS, Domain, SchemaError, Trip
from .conversions import (
    PACIFICA_WHEEL_RADIUS_M,
    acceleration_from_speed,
    convert_speed_mph_to_kmh,
    radius_from_rpm_factor,
    throttle_proxy_from_fuel_flow,
    torque_from_tractive_force,
)
from .filters import (
    FilterReport,
    drop_missing,
    integrity_filter,
    strict_filter,
    threshold_filter,
)

log = logging.getLogger(__name__)

CO2_DENSITY_G_PER_M3 = 1800.0  # at 25 C, 1 atm
RAW_SUFFIXES = (".csv", ".txt", ".tsv")


def _norm(name: str) -> str:
    return re.sub(r"[^0-9a-z]", "", str(name).lower())


# internal name -> accepted source headers, first match wins
SOURCE_COLUMNS: dict[str, dict[str, tuple[str, ...]]] = {
    "i3": {
        "time": ("Time [s]",),
        "velocity": ("Velocity [km/h]",),
        "throttle": ("Throttle [%]",),
        "motor_torque": ("Motor Torque [Nm]",),
        "ambient_temp": ("Ambient Temperature [°C]", "Ambient Temperature [C]"),
        "cabin_temp": ("Cabin Temperature Sensor [°C]", "Cabin Temperature Sensor [C]"),
        "heat_exchanger_temp": ("Heat Exchanger Temperature [°C]", "Heat Exchanger Temperature [C]"),
        "longitudinal_accel": ("Longitudinal Acceleration [m/s^2]", "Longitudinal Acceleration [m/s2]"),
        "battery_voltage": ("Battery Voltage [V]",),
        "battery_current": ("Battery Current [A]",),
    },
    "icev": {
        "time": ("Time[s]", "Time"),
        "speed_mph": ("Dyno_Spd[mph]", "Dyno_Spd"),
        "throttle": ("Pedal_accel_CAN2[per]", "Pedal_accel_CAN2", "Pedal_accel[per]"),
        "engine_torque": ("Eng_torque_TCM[Nm]", "Eng_torque_TCM", "Eng_torque_ECM[Nm]"),
        "ambient_temp": ("Cell_Temp[C]", "Cell_Temp"),
        "cabin_temp": ("Cabin_Temp[C]", "Cabin_Temp"),
        "heat_exchanger_temp": ("Radiator_Air_Outlet_Temp[C]", "Radiator_Air_Outlet_Temp"),
        "tractive_force": ("Dyno_TractiveForce[N]", "Dyno_TractiveForce"),
        "maf": ("Eng_MAF_total_ECM[gps]", "Eng_MAF_total_ECM", "Eng_MAF[gps]", "Eng_MAF"),
        "fuel_gps": ("Eng_FuelFlow_Direct2[gps]", "Eng_FuelFlow_Direct2"),
        "fuel_ccps": ("Eng_FuelFlow_Direct[ccps]", "Eng_FuelFlow_Direct"),
        "co2_m3_per_min": ("CO2_Flow[m3/min]", "CO2_Flow", "Exh_CO2_Flow[m3/min]"),
        "test_id": ("Test_ID",),
        "trip": ("Trip",),
    },
}

FUEL_COLUMNS = ("maf", "fuel_gps", "fuel_ccps")  # preference order


@dataclass(frozen=True)
class VehicleProfile:
    name: str
    domain: Domain
    required_columns: tuple[str, ...]
    wheel_radius: float | None = None
    strict: bool = False
    # i3 only: multiply battery current by this so discharge is positive
    current_sign: float = 1.0
    # Pacifica only: dilution fraction applied to the CO2 volume flow
    co2_dilution: float = 1.0
    co2_density: float = CO2_DENSITY_G_PER_M3

    def __post_init__(self):
        if not self.required_columns:
            raise ValueError("required_columns must not be empty")
        if self.wheel_radius is not None and not self.wheel_radius > 0:
            raise ValueError("wheel_radius must be > 0")

    @property
    def vehicle(self) -> str:
        return self.name

    @property
    def source_map(self) -> dict[str, tuple[str, ...]]:
        return SOURCE_COLUMNS["i3" if self.name == "i3" else "icev"]


PROFILES: dict[str, VehicleProfile] = {
    "i3": VehicleProfile(
        "i3", Domain.EV,
        ("time", "velocity", "throttle", "motor_torque", "ambient_temp", "cabin_temp",
         "battery_voltage", "battery_current"),
    ),
    "blazer": VehicleProfile(
        "blazer", Domain.ICEV,
        ("time", "speed_mph", "throttle", "engine_torque", "ambient_temp", "cabin_temp"),
    ),
    "pacifica": VehicleProfile(
        "pacifica", Domain.ICEV,
        ("time", "speed_mph", "ambient_temp", "heat_exchanger_temp", "cabin_temp", "tractive_force"),
        wheel_radius=PACIFICA_WHEEL_RADIUS_M,
    ),
    "qx50": VehicleProfile(
        "qx50", Domain.ICEV,
        ("time", "speed_mph", "throttle", "engine_torque", "ambient_temp", "cabin_temp"),
        wheel_radius=radius_from_rpm_factor(),
    ),
}
PROFILES["qx50-strict"] = replace(PROFILES["qx50"], name="qx50-strict", strict=True)


def get_profile(name: str, **overrides) -> VehicleProfile:
    try:
        profile = PROFILES[name.lower()]
    except KeyError:
        raise SchemaError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(profile, **overrides) if overrides else profile


# -- raw file access --------------------------------------------------------

def _sniff_delimiter(first_line: str) -> str:
    counts = {d: first_line.count(d) for d in ("\t", ";", ",")}
    return max(counts, key=counts.get) if max(counts.values()) else ","


def read_raw_table(path: Path) -> pd.DataFrame:
    for encoding in ("utf-8", "latin-1"):
        try:
            with open(path, encoding=encoding) as fh:
                first = fh.readline()
            sep = _sniff_delimiter(first)
            df = pd.read_csv(path, sep=sep, encoding=encoding, low_memory=False)
            break
        except UnicodeDecodeError:
            continue
    df.columns = [str(c).strip() for c in df.columns]
    return df


def resolve_columns(columns, source_map: dict[str, tuple[str, ...]]) -> dict[str, str]:
    """Map internal names to the actual header present in ``columns``."""
    present = {_norm(c): c for c in columns}
    found = {}
    for internal, aliases in source_map.items():
        for alias in aliases:
            if _norm(alias) in present:
                found[internal] = present[_norm(alias)]
                break
    return found


def _validate_header(columns, profile: VehicleProfile) -> tuple[dict[str, str], str | None]:
    found = resolve_columns(columns, profile.source_map)
    missing = [c for c in profile.required_columns if c not in found]
    if profile.domain is Domain.ICEV and not any(c in found for c in FUEL_COLUMNS):
        missing.append("fuel flow (one of " + ", ".join(FUEL_COLUMNS) + ")")
    if missing:
        return found, "missing columns: " + ", ".join(missing)
    return found, None


def trip_id_from_filename(path: Path) -> str:
    """``'61905037 Test Data.txt'`` -> ``'61905037'``; non-numeric stems stay as is."""
    stem = Path(path).stem.strip()
    m = re.match(r"^\s*(\d+(?:\.\d+)?)", stem)
    return m.group(1) if m else stem


def list_raw_files(path: Path) -> list[Path]:
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FileNotFoundError(path)
    return sorted((p for p in path.iterdir() if p.suffix.lower() in RAW_SUFFIXES),
                  key=lambda p: p.name)


def load_raw(path, profile: VehicleProfile) -> tuple[pd.DataFrame, FilterReport]:
    """Read every source file, validate headers and stack rows with internal names.

    Files are processed in lexicographic order. A ``trip`` column is set from
    the file name unless the data carries its own ``Trip``/``Test_ID``.
    """
    report = FilterReport()
    frames = []
    for file in list_raw_files(path):
        try:
            raw = read_raw_table(file)
        except Exception as exc:  # unreadable file is rejected, not fatal
            report.rejected_files[file.name] = f"unreadable: {exc}"
            continue
        found, problem = _validate_header(raw.columns, profile)
        if problem:
            log.warning("rejecting %s: %s", file.name, problem)
            report.rejected_files[file.name] = problem
            continue
        df = pd.DataFrame({internal: raw[src] for internal, src in found.items()})
        for col in df.columns:
            if col not in ("trip", "test_id"):
                df[col] = pd.to_numeric(df[col], errors="coerce")
        if "trip" in df.columns:
            df["trip"] = df["trip"].map(lambda x: x if pd.isna(x) else str(x).strip())
        elif "test_id" in df.columns and profile.name == "blazer":
            df["trip"] = df["test_id"]
        else:
            df["trip"] = trip_id_from_filename(file)
        df = df.drop(columns=["test_id"], errors="ignore")
        frames.append(df)
    if not frames:
        return pd.DataFrame(columns=["trip", "time"]), report
    data = pd.concat(frames, ignore_index=True)
    report.rows_in = len(data)
    return data, report


# -- per-vehicle harmonization -----------------------------------------------

def _fuel_flow_l_per_h(df: pd.DataFrame, factors: EmissionFactors) -> np.ndarray:
    """Fuel flow in L/h, row-wise from the first available source: MAF, g/s, cc/s."""
    n = len(df)
    out = np.full(n, np.nan)
    candidates = []
    if "maf" in df.columns:
        maf = df["maf"].to_numpy(dtype=np.float64)
        ok = maf >= 0
        conv = np.full(n, np.nan)
        conv[ok] = emissions.fuel_flow_from_maf(maf[ok], factors)
        candidates.append(conv)
    if "fuel_gps" in df.columns:
        candidates.append(df["fuel_gps"].to_numpy(dtype=np.float64) / factors.fuel_density * 3600.0)
    if "fuel_ccps" in df.columns:
        candidates.append(df["fuel_ccps"].to_numpy(dtype=np.float64) * 3.6)
    for cand in candidates:
        fill = np.isnan(out) & np.isfinite(cand) & (cand >= 0)
        out[fill] = cand[fill]
    return out


def _drop_corrupted_trip_ids(df: pd.DataFrame, report: FilterReport) -> pd.DataFrame:
    """Blazer ids are integer test numbers; fractional ids mark corrupted trips."""
    def corrupted(x) -> bool:
        try:
            return not float(x).is_integer()
        except (TypeError, ValueError):
            return False
    bad = df["trip"].map(corrupted).to_numpy(dtype=bool)
    if bad.any():
        report.drop("corrupted_trip_id", int(bad.sum()))
        report.trips_dropped.extend(sorted({str(t) for t in df.loc[bad, "trip"]}))
        df = df.loc[~bad]
    return df


def _normalize_numeric_ids(ids: pd.Series) -> pd.Series:
    def norm(x):
        try:
            f = float(x)
        except (TypeError, ValueError):
            return str(x)
        return str(int(f)) if f.is_integer() else str(x)
    return ids.map(norm)


def _harmonize_i3(df: pd.DataFrame, profile: VehicleProfile, factors: EmissionFactors,
                  report: FilterReport) -> pd.DataFrame:
    required = [c for c in profile.required_columns] + (
        ["longitudinal_accel"] if "longitudinal_accel" in df.columns else [])
    df, rep = drop_missing(df, required)
    report = report.chain(rep)
    df, rep = integrity_filter(df, nonnegative=())
    report = report.chain(rep)
    df = df.copy()
    df["co2_rate"] = emissions.ev_rate(
        factors=factors,
        voltage=df["battery_voltage"].to_numpy(dtype=np.float64),
        current=profile.current_sign * df["battery_current"].to_numpy(dtype=np.float64),
    )
    return df, report


def _harmonize_icev(df: pd.DataFrame, profile: VehicleProfile, factors: EmissionFactors,
                    report: FilterReport):
    df, rep = integrity_filter(df)
    report = report.chain(rep)
    if profile.name == "blazer":
        rep = FilterReport(rows_in=len(df))
        df = _drop_corrupted_trip_ids(df, rep)
        report = report.chain(rep)
    df = df.copy()
    df["trip"] = _normalize_numeric_ids(df["trip"])
    df["velocity"] = convert_speed_mph_to_kmh(df["speed_mph"].to_numpy(dtype=np.float64))
    fuel = _fuel_flow_l_per_h(df, factors)

    if profile.name == "pacifica":
        df["motor_torque"] = torque_from_tractive_force(
            df["tractive_force"].to_numpy(dtype=np.float64), profile.wheel_radius)
        proxy_src = (df["fuel_ccps"].to_numpy(dtype=np.float64)
                     if "fuel_ccps" in df.columns else fuel)
        throttle = np.full(len(df), np.nan)
        for _, idx in df.groupby("trip", sort=False).indices.items():
            throttle[idx] = throttle_proxy_from_fuel_flow(proxy_src[idx])
        df["throttle"] = throttle
        if "co2_m3_per_min" in df.columns and df["co2_m3_per_min"].notna().any():
            flow = df["co2_m3_per_min"].to_numpy(dtype=np.float64)
            co2 = np.full(len(df), np.nan)
            ok = flow >= 0
            co2[ok] = emissions.co2_volume_to_mass(flow[ok], profile.co2_density, profile.co2_dilution)
            df["co2_rate"] = co2
        else:
            df["co2_rate"] = emissions.icev_rate_from_fuel_flow(df["velocity"], fuel, factors)
    else:
        df["motor_torque"] = df["engine_torque"]
        df["co2_rate"] = emissions.icev_rate_from_fuel_flow(df["velocity"], fuel, factors)

    analysis = ["time", "velocity", "throttle", "motor_torque", "ambient_temp", "cabin_temp", "co2_rate"]
    df, rep = drop_missing(df, analysis)
    report = report.chain(rep)
    if profile.name == "pacifica":
        df, rep = threshold_filter(df, {
            "pacifica_torque_outlier": ("motor_torque", ">=", 400.0),
            "pacifica_co2_outlier": ("co2_rate", ">", 25.0),
        })
        report = report.chain(rep)
    return df, report


def _to_trips(df: pd.DataFrame, profile: VehicleProfile) -> list[Trip]:
    trips = []
    for trip_id, idx in df.groupby("trip", sort=False).indices.items():
        part = df.iloc[idx]
        data = np.full((len(part), len(CHANNELS)), np.nan)
        for j, name in enumerate(CHANNELS):
            if name in part.columns:
                data[:, j] = part[name].to_numpy(dtype=np.float64)
        trips.append(Trip(str(trip_id), profile.domain, profile.vehicle, data))
    return trips


def _add_acceleration(df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    accel = np.zeros(len(df))
    t = df["time"].to_numpy(dtype=np.float64)
    v = df["velocity"].to_numpy(dtype=np.float64)
    for _, idx in df.groupby("trip", sort=False).indices.items():
        accel[idx] = acceleration_from_speed(t[idx], v[idx])
    df["longitudinal_accel"] = accel
    return df


def ingest(path, profile: VehicleProfile | str,
           factors: EmissionFactors = emissions.DEFAULT_FACTORS) -> tuple[list[Trip], FilterReport]:
    """Parse, filter and harmonize all source files under ``path``.

    Returns trips sorted by trip id (numeric ids numerically) and the combined
    filter report. Rejected files are listed in ``report.rejected_files``.
    """
    if isinstance(profile, str):
        profile = get_profile(profile)
    df, report = load_raw(path, profile)
    if len(df) == 0:
        return [], report

    if profile.domain is Domain.EV:
        df, report = _harmonize_i3(df, profile, factors, report)
    else:
        df, report = _harmonize_icev(df, profile, factors, report)

    if "longitudinal_accel" not in df.columns or profile.domain is Domain.ICEV:
        df = _add_acceleration(df)
    if profile.strict:
        df, rep = strict_filter(df)
        report = report.chain(rep)

    trips = _to_trips(df, profile)
    trips.sort(key=lambda t: _trip_sort_key(t.trip_id))
    return trips, report


def _trip_sort_key(trip_id: str):
    try:
        return (0, float(trip_id), trip_id)
    except ValueError:
        return (1, 0.0, trip_id)
