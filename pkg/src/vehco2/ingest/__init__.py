from .conversions import (
    MPH_TO_KMH,
    WHEEL_RPM_PER_KMH,
    acceleration_from_speed,
    convert_speed_mph_to_kmh,
    derive_acceleration,
    derive_wheel_rpm,
    radius_from_rpm_factor,
    throttle_proxy_from_fuel_flow,
    torque_from_tractive_force,
)
from .filters import FilterReport, drop_missing, integrity_filter, iqr_fences, strict_filter
from .profiles import PROFILES, VehicleProfile, get_profile, ingest, trip_id_from_filename

__all__ = [
    "MPH_TO_KMH",
    "WHEEL_RPM_PER_KMH",
    "acceleration_from_speed",
    "convert_speed_mph_to_kmh",
    "derive_acceleration",
    "derive_wheel_rpm",
    "radius_from_rpm_factor",
    "throttle_proxy_from_fuel_flow",
    "torque_from_tractive_force",
    "FilterReport",
    "drop_missing",
    "integrity_filter",
    "iqr_fences",
    "strict_filter",
    "PROFILES",
    "VehicleProfile",
    "get_profile",
    "ingest",
    "trip_id_from_filename",
]
