import numpy as np
import pandas as pd
import pytest

from vehco2.ingest.filters import (
    FilterReport,
    drop_missing,
    integrity_filter,
    iqr_fences,
    quantile7,
    strict_filter,
    threshold_filter,
)
from vehco2.schema import EmptyTripError


def raw(times, trip="a", **cols):
    return pd.DataFrame({"trip": trip, "time": times, **cols})


def test_duplicate_time_dropped():
    out, rep = integrity_filter(raw([0.0, 1.0, 1.0, 2.0]))
    assert out["time"].tolist() == [0, 1, 2]
    assert rep.rows_dropped_by_rule == {"duplicate_time": 1}


def test_negative_time_dropped():
    out, rep = integrity_filter(raw([-1.0, 0.0, 1.0]))
    assert out["time"].tolist() == [0, 1]
    assert rep.rows_dropped_by_rule == {"negative_time": 1}


def test_negative_torque_dropped():
    out, _ = integrity_filter(raw([0.0, 1.0], engine_torque=[-5.0, 10.0]))
    assert out["engine_torque"].tolist() == [10.0]


def test_time_going_backwards():
    out, rep = integrity_filter(raw([0.0, 2.0, 1.0, 3.0]))
    assert out["time"].tolist() == [0, 2, 3]
    assert rep.rows_dropped_by_rule == {"non_increasing_time": 1}


def test_time_rule_is_per_trip():
    df = pd.DataFrame({"trip": ["a", "a", "b", "b"], "time": [5.0, 6.0, 0.0, 1.0]})
    out, rep = integrity_filter(df)
    assert len(out) == 4 and rep.rows_dropped == 0


def test_trip_id_forward_fill_is_capped():
    ids = ["a"] + [None] * 60
    df = pd.DataFrame({"trip": ids, "time": np.arange(61.0)})
    out, rep = integrity_filter(df)
    assert len(out) == 51
    assert rep.rows_dropped_by_rule == {"unresolved_trip_id": 10}


def test_all_rows_dropped_raises():
    with pytest.raises(EmptyTripError):
        integrity_filter(raw([-1.0, -2.0]))


def test_strict_rules():
    n = 40
    rng = np.random.default_rng(0)
    df = pd.DataFrame({
        "trip": "a",
        "time": np.arange(n, dtype=float),
        "velocity": rng.uniform(20, 60, n),
        "throttle": rng.uniform(10, 50, n),
        "motor_torque": rng.uniform(50, 150, n),
        "longitudinal_accel": rng.uniform(-1, 1, n),
        "co2_rate": rng.uniform(1, 3, n),
    })
    df.loc[3, "longitudinal_accel"] = 12.0
    df.loc[7, "motor_torque"] = 1500.0
    df.loc[9, "co2_rate"] = 0.0
    out, rep = strict_filter(df)
    assert 3 not in out.index and 7 not in out.index and 9 not in out.index
    assert rep.rows_dropped_by_rule["accel_limit"] == 1
    assert rep.rows_dropped_by_rule["bounds"] == 2


def test_iqr_example():
    values = np.append(np.arange(1.0, 101.0), 1000.0)
    # type-7 on the 100 regular values
    q1, q3 = quantile7(np.arange(1.0, 101.0), [0.25, 0.75])
    assert (q1, q3) == (25.75, 75.25)
    assert iqr_fences(np.arange(1.0, 101.0))[1] == pytest.approx(223.75)
    # with the outlier included the fences move slightly; 1000 is dropped either way
    q1, q3 = quantile7(values, [0.25, 0.75])
    assert (q1, q3) == (26.0, 76.0)
    lo, hi = iqr_fences(values)
    assert hi == pytest.approx(226.0) and 1000 > hi
    df = pd.DataFrame({"time": np.arange(101.0), "velocity": values * 0.1})
    out, rep = strict_filter(df, bounds={}, iqr_channels=("velocity",))
    assert len(out) == 100 and rep.rows_dropped_by_rule == {"iqr": 1}


def test_threshold_and_missing():
    df = pd.DataFrame({"time": [0.0, 1.0, 2.0], "motor_torque": [100.0, 400.0, np.nan],
                       "co2_rate": [1.0, 2.0, 30.0]})
    out, rep = threshold_filter(df, {"tq": ("motor_torque", ">=", 400.0), "co2": ("co2_rate", ">", 25.0)})
    assert out.index.tolist() == [0]
    assert rep.rows_dropped_by_rule == {"tq": 1, "co2": 1}
    out, rep = drop_missing(df, ["motor_torque"])
    assert len(out) == 2 and rep.rows_dropped == 1


def test_report_chain_and_text():
    a = FilterReport(rows_in=10, rows_dropped_by_rule={"x": 2})
    b = FilterReport(rows_in=8, rows_dropped_by_rule={"x": 1, "y": 1})
    c = a.chain(b)
    assert (c.rows_in, c.rows_out, c.rows_dropped_by_rule) == (10, 6, {"x": 3, "y": 1})
    with pytest.raises(ValueError):
        a.chain(FilterReport(rows_in=9))
    text = c.to_text({"seed": 0})
    assert "rows_in = 10" in text and "dropped.y = 1" in text and text.startswith("# seed=0")


# -- fuzzed properties ---------------------------------------------------------

def fuzz_raw(rng):
    n = int(rng.integers(1, 80))
    trips = rng.choice(["a", "b", "c", None], size=n, p=[0.3, 0.3, 0.3, 0.1]).astype(object)
    time = np.round(rng.normal(20, 15, n))
    torque = rng.normal(50, 60, n)
    return pd.DataFrame({"trip": trips, "time": time, "engine_torque": torque})


def fuzz_harmonized(rng):
    n = int(rng.integers(5, 120))
    df = pd.DataFrame({
        "trip": rng.choice(["a", "b"], n),
        "time": np.arange(n, dtype=float),
        "velocity": rng.gamma(2, 20, n),
        "throttle": rng.normal(30, 40, n),
        "motor_torque": rng.standard_cauchy(n) * 30 + 100,
        "ambient_temp": rng.normal(20, 30, n),
        "cabin_temp": rng.normal(22, 3, n),
        "longitudinal_accel": rng.normal(0, 5, n),
        "co2_rate": rng.exponential(1.0, n) * rng.choice([1, 0], n, p=[0.9, 0.1]),
    })
    return df


def _check_filter(f, df):
    try:
        once, rep1 = f(df)
    except EmptyTripError:
        return False
    assert rep1.rows_in == len(df)
    assert rep1.rows_out == len(once) == rep1.rows_in - sum(rep1.rows_dropped_by_rule.values())
    # order preserved
    assert once.index.is_monotonic_increasing
    twice, rep2 = f(once)
    assert rep2.rows_dropped == 0
    pd.testing.assert_frame_equal(once, twice)
    return True


def test_integrity_filter_fuzz():
    rng = np.random.default_rng(42)
    kept = sum(_check_filter(integrity_filter, fuzz_raw(rng)) for _ in range(1000))
    assert kept > 500


def test_strict_filter_fuzz():
    rng = np.random.default_rng(43)
    kept = sum(_check_filter(strict_filter, fuzz_harmonized(rng)) for _ in range(1000))
    assert kept > 500


def test_time_monotone_after_integrity_filter():
    rng = np.random.default_rng(5)
    for _ in range(200):
        try:
            out, _ = integrity_filter(fuzz_raw(rng))
        except EmptyTripError:
            continue
        for _, g in out.groupby("trip"):
            assert np.all(np.diff(g["time"].to_numpy()) > 0)
