import numpy as np
import pytest

from vehco2.schema import Domain, Trip


def make_trip(n=20, trip_id="t1", domain=Domain.EV, vehicle="test", seed=0, **overrides):
    rng = np.random.default_rng(seed)
    cols = dict(
        time=np.arange(n, dtype=float),
        velocity=rng.uniform(0, 80, n),
        throttle=rng.uniform(0, 100, n),
        motor_torque=rng.uniform(-50, 200, n),
        ambient_temp=rng.uniform(0, 30, n),
        cabin_temp=rng.uniform(15, 25, n),
        heat_exchanger_temp=rng.uniform(20, 60, n),
        longitudinal_accel=rng.uniform(-2, 2, n),
        co2_rate=rng.uniform(0, 1, n),
    )
    cols.update(overrides)
    return Trip.from_columns(trip_id, domain, vehicle, **cols)


@pytest.fixture
def trip():
    return make_trip()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
