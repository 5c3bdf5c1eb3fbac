"""Scaling, windowing and trip-level splitting."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .schema import Trip


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-channel min-max scaler; constant channels map to 0, nothing is clamped."""

    channels: tuple[str, ...]
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).copy()
        hi = np.asarray(self.max, dtype=np.float64).copy()
        if lo.shape != (len(self.channels),) or hi.shape != lo.shape:
            raise ValueError("min/max must have one entry per channel")
        if np.any(hi < lo):
            raise ValueError("max must be >= min")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def span(self) -> np.ndarray:
        span = self.max - self.min
        return np.where(span > 0, span, 1.0)

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = (x - self.min) / self.span
        degenerate = self.max == self.min
        if degenerate.any():
            out = np.where(degenerate, 0.0, out)
        return out

    def inverse(self, y) -> np.ndarray:
        """Back to natural units; a constant channel inverts to its constant."""
        y = np.asarray(y, dtype=np.float64)
        out = y * self.span + self.min
        degenerate = self.max == self.min
        if degenerate.any():
            out = np.where(degenerate, self.min, out)
        return out

    def select(self, channels: Sequence[str]) -> MinMaxScaler:
        idx = [self.channels.index(c) for c in channels]
        return MinMaxScaler(tuple(channels), self.min[idx], self.max[idx])


def scaler_fit(trips: Sequence[Trip], channels: Sequence[str]) -> MinMaxScaler:
    """Fit on the pooled values of ``trips``; pass only the training split."""
    if not trips:
        raise FitError("no trips to fit the scaler on")
    block = np.concatenate([t.channels(channels) for t in trips])
    lo = np.empty(len(channels))
    hi = np.empty(len(channels))
    for j, name in enumerate(channels):
        col = block[:, j]
        col = col[np.isfinite(col)]
        if col.size == 0:
            raise FitError(f"channel {name!r} has no finite values")
        lo[j], hi[j] = col.min(), col.max()
    return MinMaxScaler(tuple(channels), lo, hi)


def scaler_transform(scaler: MinMaxScaler, x) -> np.ndarray:
    return scaler.transform(x)


def scaler_inverse(scaler: MinMaxScaler, y) -> np.ndarray:
    return scaler.inverse(y)


@dataclass(frozen=True)
class WindowSpec:
    length: int = 10
    stride: int = 1

    def __post_init__(self):
        if self.length < 1 or self.stride < 1:
            raise ValueError("window length and stride must be >= 1")

    def count(self, n: int) -> int:
        return max(0, (n - self.length) // self.stride + 1)


def window_indices(n: int, spec: WindowSpec) -> np.ndarray:
    """Index of the final sample of each window."""
    return np.arange(spec.length - 1, n, spec.stride)[: spec.count(n)]


def sliding_windows(x: np.ndarray, spec: WindowSpec) -> np.ndarray:
    """``(n, d)`` -> ``(count, length, d)`` copy of every window."""
    x = np.asarray(x, dtype=np.float64)
    count = spec.count(len(x))
    if count == 0:
        return np.empty((0, spec.length) + x.shape[1:])
    view = np.lib.stride_tricks.sliding_window_view(x, spec.length, axis=0)
    # sliding_window_view puts the window axis last
    view = np.moveaxis(view, -1, 1)
    return np.ascontiguousarray(view[:: spec.stride][:count])


def make_windows(trip: Trip, spec: WindowSpec, inputs: Sequence[str], targets: Sequence[str]):
    """Windows over ``inputs`` with the ``targets`` at each window's final sample.

    Returns ``(windows, target_values, end_indices)``. A trip shorter than the
    window yields empty arrays; callers record it as skipped.
    """
    ends = window_indices(len(trip), spec)
    X = sliding_windows(trip.channels(inputs), spec)
    Y = trip.channels(targets)[ends]
    return X, Y, ends


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must be non-negative and sum to 1")


def split_by_trip(trip_ids: Sequence[str], spec: SplitSpec) -> dict[str, list[str]]:
    """Seeded shuffle then partition: floor for train and val, remainder to test."""
    ids = sorted(dict.fromkeys(str(t) for t in trip_ids))
    n = len(ids)
    n_train = int(np.floor(spec.train * n + 1e-9))
    n_val = int(np.floor(spec.val * n + 1e-9))
    needed = sum(1 for f in (spec.train, spec.val, spec.test) if f > 0)
    if n < max(3, needed):
        raise ValueError(f"need at least 3 trips to split, got {n}")
    if (spec.train > 0 and n_train == 0) or (spec.val > 0 and n_val == 0) or n - n_train - n_val == 0:
        raise ValueError(f"{n} trips are too few for fractions {spec.train}/{spec.val}/{spec.test}")
    order = np.random.default_rng(spec.seed).permutation(n)
    shuffled = [ids[i] for i in order]
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train:n_train + n_val],
        "test": shuffled[n_train + n_val:],
    }


def write_manifest(path, splits: dict[str, list[str]], header: dict | None = None) -> None:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trip_id", "split"])
    for name in ("train", "val", "test"):
        for tid in splits.get(name, []):
            w.writerow([tid, name])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_manifest(path) -> dict[str, list[str]]:
    splits: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    with open(path, encoding="utf-8") as fh:
        rows = [line for line in fh if line.strip() and not line.startswith("#")]
    for rec in csv.DictReader(rows):
        if rec["split"] not in splits:
            raise ValueError(f"unknown split {rec['split']!r} in {path}")
        splits[rec["split"]].append(rec["trip_id"])
    seen = [t for v in splits.values() for t in v]
    if len(seen) != len(set(seen)):
        raise ValueError(f"{path}: a trip appears in more than one split")
    return splits
