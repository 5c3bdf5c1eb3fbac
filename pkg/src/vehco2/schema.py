"""Unified telemetry schema shared by the EV and ICEV branches.

A :class:`Trip` stores its channels column-wise in a float64 array so that the
modeling code can slice it without copying; :attr:`Trip.samples` gives the
row view as :class:`HarmonizedSample` records when that is more convenient.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class SchemaError(ValueError):
    """A trip or file does not match the harmonized schema."""


class EmptyTripError(SchemaError):
    pass


class Domain(str, enum.Enum):
    EV = "EV"
    ICEV = "ICEV"

    @classmethod
    def parse(cls, value: str | Domain) -> Domain:
        if isinstance(value, Domain):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise SchemaError(f"unknown domain {value!r}; expected EV or ICEV") from None


# Internal channel names, in storage order.
CHANNELS = (
    "time",
    "velocity",
    "throttle",
    "motor_torque",
    "ambient_temp",
    "cabin_temp",
    "heat_exchanger_temp",
    "longitudinal_accel",
    "co2_rate",
)
OPTIONAL_CHANNELS = frozenset({"heat_exchanger_temp"})

CONTEXT_CHANNELS = ("velocity", "ambient_temp", "cabin_temp", "longitudinal_accel")
ACTUATION_CHANNELS = ("motor_torque", "throttle")
EMISSIONS_INPUT_CHANNELS = ("velocity", "motor_torque", "throttle")

# Column headers of the harmonized trip file.
FILE_COLUMNS = {
    "time": "Time [s]",
    "velocity": "Velocity [km/h]",
    "throttle": "Throttle [%]",
    "motor_torque": "Motor Torque [Nm]",
    "ambient_temp": "Ambient Temperature [C]",
    "cabin_temp": "Cabin Temperature [C]",
    "heat_exchanger_temp": "Heat Exchanger Temperature [C]",
    "longitudinal_accel": "Longitudinal Acceleration [m/s2]",
    "co2_rate": "CO2 [g/s]",
}
TRIP_COLUMN = "Trip"
FILE_HEADER = [FILE_COLUMNS[c] for c in CHANNELS] + [TRIP_COLUMN]


@dataclass(frozen=True)
class HarmonizedSample:
    time: float
    velocity: float
    throttle: float
    motor_torque: float
    ambient_temp: float
    cabin_temp: float
    heat_exchanger_temp: float
    longitudinal_accel: float
    co2_rate: float

    def __post_init__(self):
        if self.co2_rate < 0:
            raise SchemaError(f"co2_rate must be >= 0, got {self.co2_rate}")
        if self.velocity < 0:
            raise SchemaError(f"velocity must be >= 0, got {self.velocity}")


@dataclass(frozen=True)
class ContextVector:
    velocity: float
    ambient_temp: float
    cabin_temp: float
    longitudinal_accel: float


@dataclass(frozen=True)
class ActuationVector:
    motor_torque: float
    throttle: float


def _channel_index(name: str) -> int:
    try:
        return CHANNELS.index(name)
    except ValueError:
        raise SchemaError(f"unknown channel {name!r}") from None


@dataclass(frozen=True, eq=False)
class Trip:
    """One contiguous driving session.

    ``data`` has shape ``(n_samples, len(CHANNELS))``. Missing optional channels
    are NaN; required channels may be NaN only where a caller fills them later
    (e.g. ``co2_rate`` before emission targets are computed), in which case
    :func:`context_of` and friends raise for the affected channel.
    """

    trip_id: str
    domain: Domain
    vehicle: str
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or data.shape[1] != len(CHANNELS):
            raise SchemaError(f"trip {self.trip_id}: data must have shape (n, {len(CHANNELS)})")
        if data.shape[0] == 0:
            raise EmptyTripError(f"trip {self.trip_id} has no samples")
        t = data[:, 0]
        if not np.all(np.isfinite(t)):
            raise SchemaError(f"trip {self.trip_id}: non-finite time stamps")
        if data.shape[0] > 1 and np.any(np.diff(t) <= 0):
            raise SchemaError(f"trip {self.trip_id}: time must be strictly increasing")
        v = data[:, 1]
        if np.any(v[np.isfinite(v)] < 0):
            raise SchemaError(f"trip {self.trip_id}: negative velocity")
        co2 = data[:, -1]
        if np.any(co2[np.isfinite(co2)] < 0):
            raise SchemaError(f"trip {self.trip_id}: negative co2_rate")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "domain", Domain.parse(self.domain))
        object.__setattr__(self, "trip_id", str(self.trip_id))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trip):
            return NotImplemented
        return (
            self.trip_id == other.trip_id
            and self.domain == other.domain
            and self.vehicle == other.vehicle
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data, equal_nan=True)
        )

    def __hash__(self):
        return hash((self.trip_id, self.domain, self.vehicle, len(self)))

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, _channel_index(name)]

    def channels(self, names: Sequence[str]) -> np.ndarray:
        return self.data[:, [_channel_index(n) for n in names]]

    @property
    def time(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def samples(self) -> list[HarmonizedSample]:
        return [HarmonizedSample(*map(float, row)) for row in self.data]

    def with_channel(self, name: str, values) -> Trip:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self),):
            raise SchemaError(f"channel {name!r} must have {len(self)} values")
        data = self.data.copy()
        data[:, _channel_index(name)] = values
        return Trip(self.trip_id, self.domain, self.vehicle, data)

    @classmethod
    def from_samples(cls, trip_id: str, domain, vehicle: str,
                     samples: Iterable[HarmonizedSample]) -> Trip:
        rows = [[getattr(s, f.name) for f in fields(HarmonizedSample)] for s in samples]
        if not rows:
            raise EmptyTripError(f"trip {trip_id} has no samples")
        return cls(trip_id, domain, vehicle, np.asarray(rows, dtype=np.float64))

    @classmethod
    def from_columns(cls, trip_id: str, domain, vehicle: str, **columns) -> Trip:
        """Build a trip from named channel arrays; unnamed channels become NaN."""
        unknown = set(columns) - set(CHANNELS)
        if unknown:
            raise SchemaError(f"unknown channels: {sorted(unknown)}")
        lengths = {len(np.atleast_1d(v)) for v in columns.values()}
        if len(lengths) != 1:
            raise SchemaError("channel arrays differ in length")
        (n,) = lengths
        data = np.full((n, len(CHANNELS)), np.nan)
        for name, values in columns.items():
            data[:, _channel_index(name)] = values
        return cls(trip_id, domain, vehicle, data)


def _require(trip: Trip, names: Sequence[str]) -> np.ndarray:
    block = trip.channels(names)
    for j, name in enumerate(names):
        if not np.all(np.isfinite(block[:, j])):
            raise SchemaError(f"trip {trip.trip_id}: channel {name!r} is missing or non-finite")
    return block


def context_of(trip: Trip) -> list[ContextVector]:
    return [ContextVector(*map(float, row)) for row in context_array(trip)]


def actuation_of(trip: Trip) -> list[ActuationVector]:
    return [ActuationVector(*map(float, row)) for row in actuation_array(trip)]


def context_array(trip: Trip) -> np.ndarray:
    """Context channels as an ``(n, 4)`` array (velocity, ambient, cabin, accel)."""
    return _require(trip, CONTEXT_CHANNELS)


def actuation_array(trip: Trip) -> np.ndarray:
    return _require(trip, ACTUATION_CHANNELS)


def emissions_input_array(trip: Trip) -> np.ndarray:
    return _require(trip, EMISSIONS_INPUT_CHANNELS)


# -- harmonized file format -------------------------------------------------

def _fmt(x: float) -> str:
    if math.isnan(x):
        return ""
    # repr gives the shortest string that round-trips to the same double
    return repr(float(x))


def write_trips(path: str | Path, trips: Sequence[Trip], meta: dict | None = None) -> None:
    """Write trips to a harmonized CSV file.

    Metadata (domain, vehicle, plus anything in ``meta``) goes into leading
    ``#`` comment lines so the column header stays exactly :data:`FILE_HEADER`.
    """
    if not trips:
        raise SchemaError("no trips to write")
    domains = {t.domain for t in trips}
    vehicles = {t.vehicle for t in trips}
    if len(domains) != 1 or len(vehicles) != 1:
        raise SchemaError("a harmonized file holds trips of a single vehicle")
    buf = io.StringIO()
    header_meta = {"domain": trips[0].domain.value, "vehicle": trips[0].vehicle}
    header_meta.update(meta or {})
    for key, value in header_meta.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FILE_HEADER)
    for trip in trips:
        for row in trip.data:
            writer.writerow([_fmt(x) for x in row] + [trip.trip_id])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_trips(path: str | Path, domain=None, vehicle: str | None = None) -> list[Trip]:
    """Read a harmonized CSV file; trips come back in file order."""
    meta: dict[str, str] = {}
    body: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    reader = csv.reader(body)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty file") from None
    if [h.strip() for h in header] != FILE_HEADER:
        missing = [h for h in FILE_HEADER if h not in header]
        raise SchemaError(f"{path}: header mismatch (missing {missing})")
    domain = Domain.parse(domain or meta.get("domain", ""))
    vehicle = vehicle or meta.get("vehicle", Path(path).stem)

    order: list[str] = []
    rows: dict[str, list[list[float]]] = {}
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(FILE_HEADER):
            raise SchemaError(f"{path}:{lineno}: expected {len(FILE_HEADER)} fields")
        trip_id = rec[-1]
        if trip_id not in rows:
            order.append(trip_id)
            rows[trip_id] = []
        rows[trip_id].append([float(x) if x.strip() else math.nan for x in rec[:-1]])
    return [Trip(tid, domain, vehicle, np.asarray(rows[tid])) for tid in order]
