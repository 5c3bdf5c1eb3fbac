import math

import numpy as np
import pytest

from vehco2.ingest.conversions import (
    acceleration_from_speed,
    convert_speed_mph_to_kmh,
    derive_acceleration,
    derive_wheel_rpm,
    radius_from_rpm_factor,
    throttle_proxy_from_fuel_flow,
    torque_from_tractive_force,
)

from conftest import make_trip


def test_mph_to_kmh():
    assert convert_speed_mph_to_kmh(60) == pytest.approx(96.56064, abs=1e-12)
    assert convert_speed_mph_to_kmh(0) == 0
    assert convert_speed_mph_to_kmh(37.28227153) == pytest.approx(60.0, abs=1e-6)
    # inverse by division
    assert 60.0 / 1.609344 == pytest.approx(37.28227153, abs=1e-8)


def test_wheel_rpm():
    assert derive_wheel_rpm(100) == pytest.approx(715.0)
    assert derive_wheel_rpm(0) == 0
    assert derive_wheel_rpm(50) == pytest.approx(357.5)


def test_implied_radius_by_brute_force():
    # search the radius whose wheel speed at 1 km/h is 7.150 rpm
    radii = np.linspace(0.30, 0.45, 1_500_001)
    rpm = (1 / 3.6) / (2 * np.pi * radii) * 60
    best = radii[np.argmin(np.abs(rpm - 7.150))]
    assert radius_from_rpm_factor() == pytest.approx(best, abs=1e-6)
    assert radius_from_rpm_factor() == pytest.approx(0.371, abs=1e-3)


def test_torque_from_tractive_force():
    assert torque_from_tractive_force(1000, 0.3) == pytest.approx(300.0)
    assert torque_from_tractive_force(0, 0.3) == 0
    assert torque_from_tractive_force(500, 0.371) == pytest.approx(185.5)
    with pytest.raises(ValueError):
        torque_from_tractive_force(10, 0)


def test_acceleration_examples():
    a = acceleration_from_speed([0, 1, 2], [0, 10, 20])
    np.testing.assert_allclose(a, [0, 2.77778, 2.77778], atol=1e-5)
    np.testing.assert_array_equal(acceleration_from_speed([0, 1, 3, 4], [30, 30, 30, 30]), 0.0)
    np.testing.assert_array_equal(acceleration_from_speed([5.0], [12.0]), [0.0])
    with pytest.raises(ValueError):
        acceleration_from_speed([0, 1, 1], [0, 1, 2])


def test_acceleration_uses_irregular_steps():
    a = acceleration_from_speed([0, 0.5, 2.5], [0, 3.6, 3.6 * 3])
    np.testing.assert_allclose(a, [0, 2.0, 1.0])


def test_acceleration_invariant_to_dropped_prefix():
    t = np.array([0.0, 1.0, 2.5, 3.0, 4.2])
    v = np.array([0.0, 5.0, 9.0, 12.0, 11.0])
    full = acceleration_from_speed(t, v)
    # rows removed before derivation leave later differences unchanged
    tail = acceleration_from_speed(t[1:], v[1:])
    np.testing.assert_array_equal(full[2:], tail[1:])


def test_derive_acceleration_on_trip():
    trip = make_trip(n=3, time=np.array([0.0, 1.0, 2.0]), velocity=np.array([0.0, 10.0, 20.0]))
    out = derive_acceleration(trip)
    np.testing.assert_allclose(out.channel("longitudinal_accel"), [0, 10 / 3.6, 10 / 3.6])


def test_throttle_proxy_examples():
    np.testing.assert_allclose(throttle_proxy_from_fuel_flow([1, 2, 3]), [0, 50, 100])
    np.testing.assert_array_equal(throttle_proxy_from_fuel_flow([5, 5, 5]), [0, 0, 0])
    np.testing.assert_allclose(throttle_proxy_from_fuel_flow([0, 1, 4]), [0, 25, 100])


def test_throttle_proxy_keeps_missing():
    out = throttle_proxy_from_fuel_flow([1.0, math.nan, 3.0])
    assert out[0] == 0 and out[2] == 100 and math.isnan(out[1])
