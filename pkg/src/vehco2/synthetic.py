"""Synthetic EV/ICEV telemetry with closed-form actuation and emission maps.

Real paired EV/ICEV drives do not exist, so the counterfactual stage is
checked against a world where the EV response to any context is known:

* actuation ``u = F(x)``: torque and throttle from speed, temperatures and
  acceleration;
* emissions ``e = G(v, u)``: battery power from speed and actuation, converted
  with the grid factor exactly like the i3 adapter does.

Measured channels carry bounded uniform noise, so the best achievable error of
a learned ``g`` against measured emissions is ``noise_floor``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emissions import DEFAULT_FACTORS, EmissionFactors, icev_rate_from_fuel_flow
from .ingest.conversions import MPH_TO_KMH, acceleration_from_speed
from .schema import Domain, Trip

WHEEL_RADIUS_M = 0.35
BATTERY_VOLTAGE_V = 360.0


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class SyntheticWorld:
    seed: int = 0
    emission_noise: float = 0.01  # half-width of the uniform noise on e, g/s
    torque_noise: float = 2.0     # Nm
    throttle_noise: float = 1.0   # %
    factors: EmissionFactors = DEFAULT_FACTORS

    @property
    def noise_floor(self) -> float:
        """Mean absolute emission noise, E|U(-w, w)| = w / 2."""
        return self.emission_noise / 2.0

    # -- closed-form maps ----------------------------------------------------
    @staticmethod
    def true_actuation(velocity, ambient, cabin, accel) -> np.ndarray:
        torque = 90.0 * np.asarray(accel) + 1.0 * np.asarray(velocity) + 0.8 * (np.asarray(cabin) - np.asarray(ambient))
        throttle = 100.0 / (1.0 + np.exp(-(-1.5 + 1.2 * np.asarray(accel) + 0.03 * np.asarray(velocity))))
        return np.column_stack([torque, throttle])

    @staticmethod
    def battery_power(velocity, torque, throttle) -> np.ndarray:
        omega = np.asarray(velocity) / 3.6 / WHEEL_RADIUS_M
        return 1500.0 + 40.0 * np.asarray(throttle) + 2000.0 * _softplus(np.asarray(torque) * omega / 2000.0)

    def true_emissions(self, velocity, torque, throttle) -> np.ndarray:
        return self.battery_power(velocity, torque, throttle) / 1000.0 * self.factors.phi / 3600.0

    def counterfactual_oracle(self, trip: Trip) -> np.ndarray:
        """Noise-free EV emission rate for the context of any trip."""
        u = self.true_actuation(trip.channel("velocity"), trip.channel("ambient_temp"),
                                trip.channel("cabin_temp"), trip.channel("longitudinal_accel"))
        return self.true_emissions(trip.channel("velocity"), u[:, 0], u[:, 1])

    # -- drive generation ----------------------------------------------------
    def _rng(self, *key) -> np.random.Generator:
        return np.random.default_rng([self.seed, *key])

    def drive(self, n: int, rng: np.random.Generator):
        """Irregular time base, speed (km/h), ambient and cabin temperature."""
        dt = rng.uniform(0.8, 1.2, n)
        t = np.concatenate([[0.0], np.cumsum(dt[1:])])
        p1, p2 = rng.uniform(60, 200), rng.uniform(15, 40)
        a1, a2 = rng.uniform(10, 25), rng.uniform(3, 10)
        base = rng.uniform(25, 55)
        v = base + a1 * np.sin(2 * np.pi * t / p1 + rng.uniform(0, 2 * np.pi)) \
            + a2 * np.sin(2 * np.pi * t / p2 + rng.uniform(0, 2 * np.pi))
        v = np.maximum(v, 0.0)
        ambient = rng.uniform(0, 30) + 0.002 * t
        cabin = 21.0 + (ambient[0] - 21.0) * np.exp(-t / 300.0) + rng.uniform(-1, 1)
        return t, v, ambient, cabin

    def ev_trip(self, index: int, n: int = 400) -> Trip:
        rng = self._rng(0, index)
        t, v, amb, cab = self.drive(n, rng)
        a = acceleration_from_speed(t, v)
        u = self.true_actuation(v, amb, cab, a)
        e = self.true_emissions(v, u[:, 0], u[:, 1]) + rng.uniform(-self.emission_noise, self.emission_noise, n)
        torque = u[:, 0] + rng.uniform(-self.torque_noise, self.torque_noise, n)
        throttle = u[:, 1] + rng.uniform(-self.throttle_noise, self.throttle_noise, n)
        return Trip.from_columns(
            f"ev{index:03d}", Domain.EV, "synthetic-ev",
            time=t, velocity=v, throttle=throttle, motor_torque=torque, ambient_temp=amb,
            cabin_temp=cab, longitudinal_accel=a, co2_rate=np.maximum(e, 0.0))

    def icev_fuel_flow(self, v, a) -> np.ndarray:
        """ICEV fuel flow in L/h from speed and acceleration."""
        return 0.6 + 0.06 * v + 4.0 * _softplus(2.0 * a) * (v > 0)

    def icev_trip(self, index: int, n: int = 400) -> Trip:
        rng = self._rng(1, index)
        t, v, amb, cab = self.drive(n, rng)
        a = acceleration_from_speed(t, v)
        q = self.icev_fuel_flow(v, a)
        e = icev_rate_from_fuel_flow(v, q, self.factors)
        torque = np.maximum(0.0, 120.0 * a + 1.5 * v + rng.uniform(-3, 3, n))
        throttle = np.clip(10 + 30 * a + 0.4 * v, 0, 100)
        return Trip.from_columns(
            f"{61900000 + index}", Domain.ICEV, "synthetic-icev",
            time=t, velocity=v, throttle=throttle, motor_torque=torque, ambient_temp=amb,
            cabin_temp=cab, longitudinal_accel=a, co2_rate=e)

    # -- raw source files (adapter formats) ----------------------------------
    def write_i3_raw(self, directory, n_trips: int, n: int = 400) -> list[Path]:
        """i3-format session files whose battery power reproduces the EV emissions."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(n_trips):
            trip = self.ev_trip(k, n)
            e = trip.channel("co2_rate")
            power = e * 3600.0 / self.factors.phi * 1000.0
            lines = ["Time [s];Velocity [km/h];Throttle [%];Motor Torque [Nm];"
                     "Longitudinal Acceleration [m/s^2];Battery Voltage [V];Battery Current [A];"
                     "Ambient Temperature [°C];Heat Exchanger Temperature [°C];Cabin Temperature Sensor [°C]"]
            for i in range(len(trip)):
                lines.append(";".join(repr(float(x)) for x in (
                    trip.time[i], trip.channel("velocity")[i], trip.channel("throttle")[i],
                    trip.channel("motor_torque")[i], trip.channel("longitudinal_accel")[i],
                    BATTERY_VOLTAGE_V, power[i] / BATTERY_VOLTAGE_V,
                    trip.channel("ambient_temp")[i], trip.channel("ambient_temp")[i] + 15.0,
                    trip.channel("cabin_temp")[i])))
            path = directory / f"Trip{k + 1:03d}.csv"
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            paths.append(path)
        return paths

    def write_qx50_raw(self, directory, n_trips: int, n: int = 400) -> list[Path]:
        """Dyno-format (tab separated, imperial speed) ICEV test files."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(n_trips):
            trip = self.icev_trip(k, n)
            v = trip.channel("velocity")
            fuel_l_per_h = self.icev_fuel_flow(v, trip.channel("longitudinal_accel"))
            fuel_gps = fuel_l_per_h / 3600.0 * self.factors.fuel_density
            lines = ["\t".join(["Time[s]", "Dyno_Spd[mph]", "Pedal_accel_CAN2[per]", "Eng_torque_TCM[Nm]",
                                "Cell_Temp[C]", "Cabin_Temp[C]", "Radiator_Air_Outlet_Temp[C]",
                                "Eng_FuelFlow_Direct2[gps]"])]
            for i in range(len(trip)):
                lines.append("\t".join(repr(float(x)) for x in (
                    trip.time[i], v[i] / MPH_TO_KMH, trip.channel("throttle")[i],
                    trip.channel("motor_torque")[i], trip.channel("ambient_temp")[i],
                    trip.channel("cabin_temp")[i], trip.channel("ambient_temp")[i] + 20.0, fuel_gps[i])))
            path = directory / f"{trip.trip_id} Test Data.txt"
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            paths.append(path)
        return paths
