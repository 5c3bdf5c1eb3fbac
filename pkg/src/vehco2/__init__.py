"""EV-embedded counterfactual CO2 estimation from vehicle telemetry."""

from .emissions import DEFAULT_FACTORS, EmissionFactors, ev_rate, icev_rate
from .schema import CHANNELS, Domain, Trip, read_trips, write_trips

__version__ = "0.1.0"

__all__ = [
    "CHANNELS",
    "DEFAULT_FACTORS",
    "Domain",
    "EmissionFactors",
    "Trip",
    "ev_rate",
    "icev_rate",
    "read_trips",
    "write_trips",
]
