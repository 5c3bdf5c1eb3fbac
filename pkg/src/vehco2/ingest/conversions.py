"""Unit conversions and derived channels used by the vehicle adapters."""

from __future__ import annotations

import math

import numpy as np

from ..schema import Trip

MPH_TO_KMH = 1.609344
WHEEL_RPM_PER_KMH = 7.150
PACIFICA_WHEEL_RADIUS_M = 0.3


def convert_speed_mph_to_kmh(v):
    return np.multiply(v, MPH_TO_KMH)


def derive_wheel_rpm(v_kmh):
    return np.multiply(v_kmh, WHEEL_RPM_PER_KMH)


def radius_from_rpm_factor(rpm_per_kmh: float = WHEEL_RPM_PER_KMH) -> float:
    """Effective rolling radius (m) implied by a wheel-RPM-per-km/h factor."""
    # rpm = (v / 3.6) / (2 pi R) * 60
    return 60.0 / (3.6 * 2.0 * math.pi * rpm_per_kmh)


def torque_from_tractive_force(force_n, radius_m: float):
    if not radius_m > 0:
        raise ValueError(f"wheel radius must be > 0, got {radius_m}")
    return np.multiply(force_n, radius_m)


def acceleration_from_speed(time_s, v_kmh) -> np.ndarray:
    """Backward finite difference of speed, m/s^2, first sample 0.

    Uses the actual (possibly irregular) time stamps; no smoothing.
    """
    t = np.asarray(time_s, dtype=np.float64)
    v = np.asarray(v_kmh, dtype=np.float64) / 3.6
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("time and speed must be 1-D arrays of equal length")
    a = np.zeros_like(v)
    if t.size > 1:
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("non-positive time step; run the integrity filter first")
        a[1:] = np.diff(v) / dt
    return a


def derive_acceleration(trip: Trip) -> Trip:
    a = acceleration_from_speed(trip.time, trip.channel("velocity"))
    return trip.with_channel("longitudinal_accel", a)


def throttle_proxy_from_fuel_flow(flow) -> np.ndarray:
    """Min-max normalize one trip's fuel flow to a 0-100 % throttle proxy.

    A constant flow maps to 0 % rather than NaN.
    """
    q = np.asarray(flow, dtype=np.float64)
    if q.size == 0:
        return q.copy()
    lo, hi = np.nanmin(q), np.nanmax(q)
    if not hi > lo:
        out = np.zeros_like(q)
        out[np.isnan(q)] = np.nan
        return out
    return (q - lo) / (hi - lo) * 100.0
