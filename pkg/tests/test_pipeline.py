import numpy as np
import pytest

from vehco2 import pipeline
from vehco2.nn import ModelConfig, TrainConfig
from vehco2.pipeline import (
    MeasuredActuation,
    PipelineConfigError,
    Role,
    SequenceModel,
    TripTooShort,
    counterfactual,
    left_riemann_total,
    mae,
    proxy_validate,
)
from vehco2.schema import Domain, SchemaError, Trip
from vehco2.synthetic import SyntheticWorld

SMALL_G = ModelConfig(input_dim=3, hidden_units=8)
SMALL_F = ModelConfig(input_dim=4, hidden_units=8, output_dim=2)
QUICK = TrainConfig(epochs=4, base_lr=1e-2, batch_size=32)


def affine_trip(i, n=200, domain=Domain.EV):
    rng = np.random.default_rng(i)
    t = np.arange(n, dtype=float)
    v = np.clip(40 + 20 * np.sin(t / 15 + rng.uniform(0, 6)) + rng.normal(0, 2, n), 0, None)
    a = np.concatenate([[0], np.diff(v) / 3.6])
    return Trip.from_columns(
        f"s{i}", domain, "affine", time=t, velocity=v, throttle=np.full(n, 20.0),
        motor_torque=2 * v + 30 * a + 50, ambient_temp=np.full(n, rng.uniform(0, 30)),
        cabin_temp=np.full(n, 21.0), longitudinal_accel=a, co2_rate=0.01 * v / 80)


@pytest.fixture(scope="module")
def world():
    return SyntheticWorld(seed=5)


@pytest.fixture(scope="module")
def ev_models(world):
    trips = [world.ev_trip(i, 120) for i in range(6)]
    g = pipeline.train_emissions_model(Domain.EV, trips[:4], trips[4:], model_cfg=SMALL_G, train_cfg=QUICK)
    f = pipeline.train_feature_model(Domain.EV, trips[:4], trips[4:], model_cfg=SMALL_F, train_cfg=QUICK)
    return f, g, trips


def test_mae_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0
    assert mae([1, 3], [2, 2]) == 1.0
    with pytest.raises(ValueError):
        mae([1, 2], [1])


def test_defaults_per_domain():
    ev = pipeline.default_model_config(Domain.EV, Role.EMISSIONS)
    icev = pipeline.default_model_config(Domain.ICEV, Role.FEATURE)
    assert (ev.hidden_units, ev.lstm_layers, ev.output_dim, ev.window_len) == (32, 1, 1, 10)
    assert (icev.hidden_units, icev.lstm_layers, icev.output_dim, icev.input_dim) == (64, 2, 2, 4)
    assert pipeline.default_train_config(Domain.EV).epochs == 20
    assert pipeline.default_train_config(Domain.ICEV).epochs == 50


def test_model_metadata(ev_models):
    f, g, _ = ev_models
    assert g.role is Role.EMISSIONS and g.inputs == ("velocity", "motor_torque", "throttle")
    assert f.role is Role.FEATURE and f.targets == ("motor_torque", "throttle")
    assert len(g.history) == QUICK.epochs and set(g.metrics) >= {"val_mae", "val_mse"}


def test_substitution_identity(ev_models):
    _, g, trips = ev_models
    rep = proxy_validate(MeasuredActuation(Domain.EV), g, trips[4:])
    assert len(rep.rows) == 2
    for row in rep.rows:
        assert row.proxy_mae == row.direct_mae
        assert row.torque_mae == 0 and row.throttle_mae == 0


def test_proxy_report_shape(ev_models):
    f, g, trips = ev_models
    short = trips[5].__class__(trips[5].trip_id + "x", Domain.EV, trips[5].vehicle, trips[5].data[:15])
    rep = proxy_validate(f, g, trips[4:] + [short])
    assert [r.trip_id for r in rep.rows] == [t.trip_id for t in trips[4:]]
    assert rep.skipped == [short.trip_id]
    aggs = rep.aggregates()
    assert set(aggs) == {"direct_mae", "proxy_mae", "torque_mae", "throttle_mae", "delta"}
    assert all(len(r) == 5 for r in rep.table_rows())
    assert all(v >= 0 for r in rep.rows for v in (r.direct_mae, r.proxy_mae, r.torque_mae, r.throttle_mae))


def test_domain_mismatch(ev_models):
    f, g, trips = ev_models
    with pytest.raises(PipelineConfigError):
        proxy_validate(MeasuredActuation(Domain.ICEV), g, trips)
    with pytest.raises(PipelineConfigError):
        proxy_validate(f, f, trips)
    with pytest.raises(PipelineConfigError):
        counterfactual(trips[0], f, g)


def test_constant_context_counterfactual(ev_models):
    f, g, _ = ev_models
    n = 40
    trip = Trip.from_columns("c", Domain.ICEV, "icev", time=np.arange(n, dtype=float),
                             velocity=np.zeros(n), throttle=np.zeros(n), motor_torque=np.zeros(n),
                             ambient_temp=np.zeros(n), cabin_temp=np.zeros(n),
                             longitudinal_accel=np.zeros(n), co2_rate=np.full(n, 0.5))
    res = counterfactual(trip, f, g)
    assert len(res.emissions_ev) == n - 18
    assert np.all(res.emissions_ev == res.emissions_ev[0])
    # equals g on the zero-velocity window fed with f's prediction for the zero context
    _, u = f.predict_series(np.zeros((10, 4)))
    _, e = g.predict_series(np.column_stack([np.zeros(10), np.repeat(u, 10, axis=0)]))
    assert res.emissions_ev[0] == pytest.approx(e[0, 0], rel=1e-12)


def test_counterfactual_alignment_and_totals(ev_models, world):
    f, g, _ = ev_models
    trip = world.icev_trip(0, 80)
    res = counterfactual(trip, f, g)
    assert len(res.time) == len(res.velocity) == len(res.emissions_ev) == len(res.emissions_icev) == 80 - 18
    np.testing.assert_array_equal(res.time, trip.time[18:])
    np.testing.assert_array_equal(res.emissions_icev, trip.channel("co2_rate")[18:])
    np.testing.assert_array_equal(res.gap, res.emissions_ev - res.emissions_icev)
    totals = res.totals()
    # zero-order hold rendered as a step polyline and integrated with the trapezoid rule
    t, r = res.time, res.gap
    ts = np.repeat(t, 2)[1:-1]
    rs = np.repeat(r[:-1], 2)
    assert totals["gap_total_g"] == pytest.approx(np.trapezoid(rs, ts), abs=1e-9)
    assert totals["gap_total_g"] == pytest.approx(totals["ev_total_g"] - totals["icev_total_g"], abs=1e-9)
    assert totals["duration_s"] == t[-1] - t[0]


def test_counterfactual_deterministic(ev_models, world):
    f, g, _ = ev_models
    a = counterfactual(world.icev_trip(1, 60), f, g)
    b = counterfactual(world.icev_trip(1, 60), f, g)
    assert a.emissions_ev.tobytes() == b.emissions_ev.tobytes()


def test_counterfactual_errors(ev_models, world):
    f, g, _ = ev_models
    trip = world.icev_trip(2, 60)
    with pytest.raises(TripTooShort):
        counterfactual(Trip(trip.trip_id, Domain.ICEV, "x", trip.data[:12]), f, g)
    with pytest.raises(SchemaError, match="cabin_temp"):
        counterfactual(trip.with_channel("cabin_temp", np.full(60, np.nan)), f, g)


def test_left_riemann():
    assert left_riemann_total([0, 1, 3], [2.0, 4.0, 100.0]) == 2.0 + 8.0


def test_save_load_predicts_identically(ev_models, tmp_path, world):
    _, g, trips = ev_models
    g.save(tmp_path / "g.ckpt")
    back = SequenceModel.load(tmp_path / "g.ckpt")
    a = g.predict_trip(trips[0])[1]
    b = back.predict_trip(trips[0])[1]
    assert a.tobytes() == b.tobytes()
    assert back.history == g.history and back.model_cfg == g.model_cfg


def test_learnable_emission_map():
    train = [affine_trip(i) for i in range(8)]
    val = [affine_trip(100 + i) for i in range(2)]
    g = pipeline.train_emissions_model(Domain.EV, train, val, model_cfg=SMALL_G,
                                       train_cfg=TrainConfig(epochs=20, base_lr=1e-2))
    assert g.metrics["val_mae"][0] < 1e-3


def test_learnable_actuation_map():
    train = [affine_trip(i) for i in range(8)]
    val = [affine_trip(100 + i) for i in range(2)]
    f = pipeline.train_feature_model(Domain.EV, train, val,
                                     model_cfg=ModelConfig(input_dim=4, hidden_units=16, output_dim=2),
                                     train_cfg=TrainConfig(epochs=40, base_lr=2e-2, batch_size=32))
    torque_mae, throttle_mae = f.metrics["val_mae"]
    assert torque_mae < 0.5
    assert throttle_mae < 1e-12   # throttle is constant in this world


def test_constant_target_predicts_constant():
    trips = [affine_trip(i, 60) for i in range(4)]
    trips = [t.with_channel("co2_rate", np.full(len(t), 0.3)) for t in trips]
    g = pipeline.train_emissions_model(Domain.EV, trips[:3], trips[3:], model_cfg=SMALL_G, train_cfg=QUICK)
    assert g.metrics["val_mae"][0] < 1e-12


def test_phi_pass_through(world):
    trips = [world.ev_trip(i, 100) for i in range(5)]
    c = 1.7
    scaled = [t.with_channel("co2_rate", c * t.channel("co2_rate")) for t in trips]
    g = pipeline.train_emissions_model(Domain.EV, trips[:4], trips[4:], model_cfg=SMALL_G, train_cfg=QUICK)
    gc = pipeline.train_emissions_model(Domain.EV, scaled[:4], scaled[4:], model_cfg=SMALL_G, train_cfg=QUICK)
    base = g.metrics["val_mae"][0]
    ends, pred = gc.predict_trip(scaled[4])
    assert mae(pred[:, 0], scaled[4].channel("co2_rate")[ends]) <= c * base + 1e-6


def test_train_rejects_wrong_domain_and_empty():
    with pytest.raises(PipelineConfigError):
        pipeline.train_emissions_model(Domain.ICEV, [affine_trip(0)], model_cfg=SMALL_G, train_cfg=QUICK)
    with pytest.raises(PipelineConfigError):
        pipeline.train_emissions_model(Domain.EV, [], model_cfg=SMALL_G, train_cfg=QUICK)
