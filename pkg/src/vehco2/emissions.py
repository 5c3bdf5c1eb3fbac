"""Instantaneous CO2-equivalent emission rates in g/s.

Every function accepts scalars or array-likes. Scalar in, float out; array in,
ndarray out.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class EmissionInputError(ValueError):
    pass


@dataclass(frozen=True)
class EmissionFactors:
    phi: float = 38.5            # g CO2 per kWh of electricity
    F_g: float = 2310.0          # g CO2 per litre of gasoline
    F_e: float = 1510.0          # g CO2 per litre of ethanol
    ethanol_share_P: float = 0.0  # volumetric ethanol share, percent
    afr: float = 14.7            # stoichiometric air-fuel ratio
    fuel_density: float = 740.0  # g/L

    def __post_init__(self):
        for name in ("phi", "F_g", "F_e", "afr", "fuel_density"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if not 0.0 <= self.ethanol_share_P <= 100.0:
            raise ValueError(f"ethanol_share_P must lie in [0, 100], got {self.ethanol_share_P}")

    def blend_factor(self) -> float:
        """Litre-weighted CO2 factor of the fuel blend, g/L."""
        share = self.ethanol_share_P / 100.0
        return (1.0 - share) * self.F_g + share * self.F_e

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_FACTORS = EmissionFactors()


@dataclass(frozen=True)
class ElectricalSample:
    battery_voltage: float
    battery_current: float


def _out(x, *inputs):
    return float(x) if all(np.ndim(a) == 0 for a in inputs) else x


def ev_rate(sample: ElectricalSample | None = None, factors: EmissionFactors = DEFAULT_FACTORS,
            *, voltage=None, current=None):
    """Electric-based rate from battery power and the grid factor ``phi``.

    Regeneration (negative current) is not credited and yields 0 g/s.
    """
    if sample is not None:
        voltage, current = sample.battery_voltage, sample.battery_current
    v = np.asarray(voltage, dtype=np.float64)
    i = np.asarray(current, dtype=np.float64)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
        raise EmissionInputError("battery voltage and current must be finite")
    power_w = np.abs(i * v)
    rate = np.where(i < 0, 0.0, power_w / 1000.0 * (factors.phi / 3600.0))
    return _out(rate, v, i)


def icev_rate(velocity, efficiency_k, factors: EmissionFactors = DEFAULT_FACTORS):
    """Fuel-based rate from speed (km/h) and instantaneous efficiency K (km/L)."""
    v = np.asarray(velocity, dtype=np.float64)
    k = np.asarray(efficiency_k, dtype=np.float64)
    v, k = np.broadcast_arrays(v, k)
    moving = v > 0
    if np.any(moving & ~(k > 0)):
        raise EmissionInputError("efficiency K must be > 0 wherever velocity > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(moving, v / (3600.0 * np.where(moving, k, 1.0)), 0.0) * factors.blend_factor()
    return _out(rate, v)


def fuel_flow_from_maf(maf, factors: EmissionFactors = DEFAULT_FACTORS):
    """Fuel volume flow in L/h from mass air flow in g/s."""
    m = np.asarray(maf, dtype=np.float64)
    if np.any(m < 0):
        raise EmissionInputError("MAF must be >= 0")
    return _out(m / factors.afr / factors.fuel_density * 3600.0, m)


def efficiency_K(velocity, fuel_flow):
    """Instantaneous efficiency in km/L from speed (km/h) and fuel flow (L/h)."""
    v = np.asarray(velocity, dtype=np.float64)
    q = np.asarray(fuel_flow, dtype=np.float64)
    if np.any(~(q > 0)):
        raise EmissionInputError("fuel flow must be > 0 to define K (idle handled by icev_rate)")
    return _out(v / q, v, q)


def co2_volume_to_mass(flow_m3_per_min, density_g_per_m3: float, dilution: float = 1.0):
    """CO2 mass rate in g/s from a volumetric flow in m^3/min."""
    f = np.asarray(flow_m3_per_min, dtype=np.float64)
    if np.any(f < 0):
        raise EmissionInputError("CO2 volume flow must be >= 0")
    if not density_g_per_m3 > 0:
        raise EmissionInputError("gas density must be > 0")
    if not 0.0 < dilution <= 1.0:
        raise EmissionInputError("dilution must lie in (0, 1]")
    return _out(f / 60.0 * density_g_per_m3 * dilution, f)


def icev_rate_from_fuel_flow(velocity, fuel_flow_l_per_h,
                             factors: EmissionFactors = DEFAULT_FACTORS) -> np.ndarray:
    """Series helper: derive K where fuel flows and apply :func:`icev_rate`.

    Stationary samples and samples with zero fuel flow emit 0 g/s; samples
    with a missing fuel flow come back NaN so the caller can drop them.
    """
    v = np.asarray(velocity, dtype=np.float64)
    q = np.asarray(fuel_flow_l_per_h, dtype=np.float64)
    active = (v > 0) & (q > 0)
    k = np.ones_like(v)
    k[active] = efficiency_K(v[active], q[active])
    rate = np.asarray(icev_rate(np.where(active, v, 0.0), k, factors), dtype=np.float64)
    rate[np.isnan(q) | np.isnan(v)] = np.nan
    return rate
