"""Domain-specific training, proxy validation and counterfactual composition.

Alignment convention: a model with window length ``L`` produces its first
prediction at sample ``L - 1``. Composing the feature model with the emissions
model therefore yields predictions from sample ``2L - 2`` on; both direct and
proxy errors are measured on that common index set.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import nn
from .dataset import MinMaxScaler, WindowSpec, make_windows, scaler_fit, sliding_windows, window_indices
from .nn import checkpoint
from .nn.model import Params
from .report import AggregateStats, aggregate
from .schema import (
    ACTUATION_CHANNELS,
    CONTEXT_CHANNELS,
    EMISSIONS_INPUT_CHANNELS,
    Domain,
    SchemaError,
    Trip,
    actuation_array,
    context_array,
    emissions_input_array,
)

log = logging.getLogger(__name__)


class Role(str, enum.Enum):
    FEATURE = "feature"
    EMISSIONS = "emissions"


class PipelineConfigError(ValueError):
    pass


class TripTooShort(ValueError):
    pass


ROLE_INPUTS = {Role.FEATURE: CONTEXT_CHANNELS, Role.EMISSIONS: EMISSIONS_INPUT_CHANNELS}
ROLE_TARGETS = {Role.FEATURE: ACTUATION_CHANNELS, Role.EMISSIONS: ("co2_rate",)}


def default_model_config(domain: Domain, role: Role, seed: int = 0, window_len: int = 10) -> nn.ModelConfig:
    ev = Domain.parse(domain) is Domain.EV
    return nn.ModelConfig(
        input_dim=len(ROLE_INPUTS[Role(role)]),
        hidden_units=32 if ev else 64,
        lstm_layers=1 if ev else 2,
        output_dim=len(ROLE_TARGETS[Role(role)]),
        window_len=window_len,
        seed=seed,
    )


def default_train_config(domain: Domain) -> nn.TrainConfig:
    return nn.TrainConfig(epochs=20 if Domain.parse(domain) is Domain.EV else 50)


def mae(pred, true) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("empty series")
    return float(np.mean(np.abs(pred - true)))


def left_riemann_total(time, rate) -> float:
    """Integral of a rate (g/s) over the native time base, rate held from each sample."""
    t = np.asarray(time, dtype=np.float64)
    r = np.asarray(rate, dtype=np.float64)
    return float(np.sum(r[:-1] * np.diff(t)))


class ActuationModel(Protocol):
    domain: Domain

    def predict_actuation(self, trip: Trip) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass
class SequenceModel:
    """A trained feature (f) or emissions (g) model with its scalers."""

    role: Role
    domain: Domain
    vehicle: str
    model_cfg: nn.ModelConfig
    train_cfg: nn.TrainConfig
    params: Params
    input_scaler: MinMaxScaler
    target_scaler: MinMaxScaler
    history: list[nn.EpochRecord] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.role = Role(self.role)
        self.domain = Domain.parse(self.domain)
        if self.input_scaler.channels != ROLE_INPUTS[self.role]:
            raise PipelineConfigError(f"input channels {self.input_scaler.channels} do not match role {self.role.value}")

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(self.model_cfg.window_len)

    @property
    def inputs(self) -> tuple[str, ...]:
        return ROLE_INPUTS[self.role]

    @property
    def targets(self) -> tuple[str, ...]:
        return ROLE_TARGETS[self.role]

    def predict_series(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Predict from a natural-unit input series ``(n, input_dim)``.

        Returns the window end indices and ``(count, output_dim)`` predictions
        in natural units.
        """
        x = np.asarray(x, dtype=np.float64)
        ends = window_indices(len(x), self.window)
        if ends.size == 0:
            return ends, np.empty((0, self.model_cfg.output_dim))
        windows = sliding_windows(self.input_scaler.transform(x), self.window)
        y = nn.predict(self.params, windows)
        return ends, self.target_scaler.inverse(y)

    def predict_trip(self, trip: Trip) -> tuple[np.ndarray, np.ndarray]:
        x = context_array(trip) if self.role is Role.FEATURE else emissions_input_array(trip)
        return self.predict_series(x)

    def predict_actuation(self, trip: Trip) -> tuple[np.ndarray, np.ndarray]:
        if self.role is not Role.FEATURE:
            raise PipelineConfigError("predict_actuation needs a feature model")
        return self.predict_trip(trip)

    # -- persistence --------------------------------------------------------
    def to_checkpoint(self, extra_meta: dict | None = None) -> tuple[dict, dict]:
        meta = {
            "role": self.role.value,
            "domain": self.domain.value,
            "vehicle": self.vehicle,
            "model_config": self.model_cfg.as_dict(),
            "train_config": {k: getattr(self.train_cfg, k) for k in self.train_cfg.__dataclass_fields__},
            "input_channels": list(self.input_scaler.channels),
            "target_channels": list(self.target_scaler.channels),
            "history": [[r.epoch, r.train_mse, r.val_mse] for r in self.history],
            "metrics": self.metrics,
            "seed": self.model_cfg.seed,
        }
        meta.update(extra_meta or {})
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({
            "scaler/input_min": self.input_scaler.min, "scaler/input_max": self.input_scaler.max,
            "scaler/target_min": self.target_scaler.min, "scaler/target_max": self.target_scaler.max,
        })
        return meta, arrays

    def save(self, path, extra_meta: dict | None = None) -> None:
        checkpoint.save(path, *self.to_checkpoint(extra_meta))

    @classmethod
    def load(cls, path) -> SequenceModel:
        meta, arrays = checkpoint.load(path)
        params = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("param/")}
        return cls(
            role=Role(meta["role"]),
            domain=Domain.parse(meta["domain"]),
            vehicle=meta["vehicle"],
            model_cfg=nn.ModelConfig(**meta["model_config"]),
            train_cfg=nn.TrainConfig(**meta["train_config"]),
            params=params,
            input_scaler=MinMaxScaler(tuple(meta["input_channels"]),
                                      arrays["scaler/input_min"], arrays["scaler/input_max"]),
            target_scaler=MinMaxScaler(tuple(meta["target_channels"]),
                                       arrays["scaler/target_min"], arrays["scaler/target_max"]),
            history=[nn.EpochRecord(int(e), float(a), float(b)) for e, a, b in meta["history"]],
            metrics=meta.get("metrics", {}),
        )


def _stack_windows(trips: Sequence[Trip], spec: WindowSpec, inputs, targets):
    xs, ys, skipped = [], [], []
    for trip in trips:
        X, Y, _ = make_windows(trip, spec, inputs, targets)
        if len(X) == 0:
            skipped.append(trip.trip_id)
            continue
        xs.append(X)
        ys.append(Y)
    if not xs:
        return np.empty((0, spec.length, len(inputs))), np.empty((0, len(targets))), skipped
    return np.concatenate(xs), np.concatenate(ys), skipped


def _check_trips(trips: Sequence[Trip], domain: Domain, channels) -> None:
    for trip in trips:
        if trip.domain is not domain:
            raise PipelineConfigError(f"trip {trip.trip_id} is {trip.domain.value}, expected {domain.value}")
        block = trip.channels(channels)
        bad = [c for j, c in enumerate(channels) if not np.all(np.isfinite(block[:, j]))]
        if bad:
            raise SchemaError(f"trip {trip.trip_id}: channels {bad} are missing or non-finite")


def train_model(role: Role, domain: Domain, train_trips: Sequence[Trip], val_trips: Sequence[Trip] = (),
                model_cfg: nn.ModelConfig | None = None, train_cfg: nn.TrainConfig | None = None,
                seed: int = 0) -> SequenceModel:
    role = Role(role)
    domain = Domain.parse(domain)
    if not train_trips:
        raise PipelineConfigError("empty training split")
    model_cfg = model_cfg or default_model_config(domain, role, seed)
    train_cfg = train_cfg or default_train_config(domain)
    inputs, targets = ROLE_INPUTS[role], ROLE_TARGETS[role]
    _check_trips(list(train_trips) + list(val_trips), domain, inputs + targets)
    if model_cfg.input_dim != len(inputs) or model_cfg.output_dim != len(targets):
        raise PipelineConfigError(f"{role.value} model needs input_dim={len(inputs)}, output_dim={len(targets)}")

    spec = WindowSpec(model_cfg.window_len)
    x_scaler = scaler_fit(train_trips, inputs)
    y_scaler = scaler_fit(train_trips, targets)
    X, Y, skipped = _stack_windows(train_trips, spec, inputs, targets)
    if skipped:
        log.info("skipped %d training trips shorter than the window: %s", len(skipped), skipped)
    if len(X) == 0:
        raise PipelineConfigError("no training windows (all trips shorter than the window)")
    Xv, Yv, _ = _stack_windows(val_trips, spec, inputs, targets)
    params, history = nn.train(
        model_cfg, train_cfg, x_scaler.transform(X), y_scaler.transform(Y),
        x_scaler.transform(Xv) if len(Xv) else None, y_scaler.transform(Yv) if len(Yv) else None)

    vehicle = train_trips[0].vehicle
    model = SequenceModel(role, domain, vehicle, model_cfg, train_cfg, params, x_scaler, y_scaler, history)
    if len(Xv):
        pred = y_scaler.inverse(nn.predict(params, x_scaler.transform(Xv)))
        model.metrics = {
            "val_mae": [mae(pred[:, j], Yv[:, j]) for j in range(len(targets))],
            "val_mse": [float(np.mean((pred[:, j] - Yv[:, j]) ** 2)) for j in range(len(targets))],
            "targets": list(targets),
            "skipped_train_trips": skipped,
        }
    return model


def train_emissions_model(domain, train_trips, val_trips=(), **kwargs) -> SequenceModel:
    return train_model(Role.EMISSIONS, domain, train_trips, val_trips, **kwargs)


def train_feature_model(domain, train_trips, val_trips=(), **kwargs) -> SequenceModel:
    return train_model(Role.FEATURE, domain, train_trips, val_trips, **kwargs)


@dataclass(frozen=True)
class MeasuredActuation:
    """Feature-model stand-in that replays the measured actuation of a trip."""

    domain: Domain
    window_len: int = 10

    def predict_actuation(self, trip: Trip):
        ends = window_indices(len(trip), WindowSpec(self.window_len))
        return ends, actuation_array(trip)[ends]


# -- stage 2 --------------------------------------------------------------

@dataclass(frozen=True)
class ProxyRow:
    trip_id: str
    direct_mae: float
    proxy_mae: float
    torque_mae: float
    throttle_mae: float

    @property
    def delta(self) -> float:
        return self.proxy_mae - self.direct_mae


@dataclass
class ProxyReport:
    rows: list[ProxyRow]
    skipped: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        if name == "delta":
            return np.array([r.delta for r in self.rows])
        return np.array([getattr(r, name) for r in self.rows])

    def aggregates(self) -> dict[str, AggregateStats]:
        return {name: aggregate(self.column(name))
                for name in ("direct_mae", "proxy_mae", "torque_mae", "throttle_mae", "delta")}

    def n_proxy_not_worse(self) -> int:
        return int(sum(r.proxy_mae <= r.direct_mae for r in self.rows))

    def table_rows(self) -> list[list]:
        return [[r.trip_id, r.direct_mae, r.proxy_mae, r.torque_mae, r.throttle_mae] for r in self.rows]


def _composed(trip: Trip, f_model: ActuationModel, g_model: SequenceModel):
    """Run f on the trip context, then g on (velocity, predicted actuation).

    Returns absolute sample indices, the actuation predictions at those
    indices and the emissions predictions.
    """
    ends_f, u_hat = f_model.predict_actuation(trip)
    if len(ends_f) == 0:
        raise TripTooShort(f"trip {trip.trip_id} has {len(trip)} samples, shorter than the window")
    v = trip.channel("velocity")[ends_f]
    ends_g, e_hat = g_model.predict_series(np.column_stack([v, u_hat]))
    if len(ends_g) == 0:
        need = int(ends_f[0]) + g_model.model_cfg.window_len
        raise TripTooShort(f"trip {trip.trip_id} has {len(trip)} samples; composition needs {need}")
    return ends_f[ends_g], u_hat[ends_g], e_hat[:, 0], (ends_f, u_hat)


def proxy_validate(f_model: ActuationModel, g_model: SequenceModel, trips: Sequence[Trip]) -> ProxyReport:
    """Direct vs proxy emissions error per held-out trip."""
    if g_model.role is not Role.EMISSIONS:
        raise PipelineConfigError("g_model must be an emissions model")
    if Domain.parse(f_model.domain) is not g_model.domain:
        raise PipelineConfigError("feature and emissions models belong to different domains")
    rows, skipped = [], []
    for trip in trips:
        if trip.domain is not g_model.domain:
            raise PipelineConfigError(f"trip {trip.trip_id} is not {g_model.domain.value}")
        try:
            idx, _, e_proxy, (ends_f, u_hat) = _composed(trip, f_model, g_model)
        except TripTooShort as exc:
            log.info("skipping: %s", exc)
            skipped.append(trip.trip_id)
            continue
        ends_d, e_direct = g_model.predict_trip(trip)
        direct_at = dict(zip(ends_d.tolist(), e_direct[:, 0]))
        e_direct = np.array([direct_at[i] for i in idx.tolist()])
        truth = trip.channel("co2_rate")[idx]
        u_true = actuation_array(trip)[ends_f]
        rows.append(ProxyRow(
            trip.trip_id,
            direct_mae=mae(e_direct, truth),
            proxy_mae=mae(e_proxy, truth),
            torque_mae=mae(u_hat[:, 0], u_true[:, 0]),
            throttle_mae=mae(u_hat[:, 1], u_true[:, 1]),
        ))
    return ProxyReport(rows, skipped)


# -- stage 3 ----------------------------------------------------------------

@dataclass
class CounterfactualResult:
    trip_id: str
    time: np.ndarray
    velocity: np.ndarray
    actuation_ev: np.ndarray   # predicted (torque, throttle) of the EV
    emissions_ev: np.ndarray   # counterfactual EV rate, g/s
    emissions_icev: np.ndarray  # observed ICEV rate, g/s

    @property
    def gap(self) -> np.ndarray:
        return self.emissions_ev - self.emissions_icev

    def totals(self) -> dict[str, float]:
        return {
            "ev_total_g": left_riemann_total(self.time, self.emissions_ev),
            "icev_total_g": left_riemann_total(self.time, self.emissions_icev),
            "gap_total_g": left_riemann_total(self.time, self.gap),
            "duration_s": float(self.time[-1] - self.time[0]),
        }

    def gap_stats(self) -> AggregateStats:
        return aggregate(self.gap)


def counterfactual(icev_trip: Trip, f_ev: ActuationModel, g_ev: SequenceModel) -> CounterfactualResult:
    """EV-embedded emission stream for an observed ICEV trip."""
    if icev_trip.domain is not Domain.ICEV:
        raise PipelineConfigError(f"trip {icev_trip.trip_id} is not an ICEV trip")
    if Domain.parse(f_ev.domain) is not Domain.EV or g_ev.domain is not Domain.EV:
        raise PipelineConfigError("counterfactual needs EV feature and emissions models")
    if g_ev.role is not Role.EMISSIONS:
        raise PipelineConfigError("g_ev must be an emissions model")
    context_array(icev_trip)  # raises SchemaError on a missing context channel
    e_icev = icev_trip.channel("co2_rate")
    if not np.all(np.isfinite(e_icev)):
        raise SchemaError(f"trip {icev_trip.trip_id}: ICEV emission rate missing")
    idx, u_hat, e_hat, _ = _composed(icev_trip, f_ev, g_ev)
    return CounterfactualResult(
        icev_trip.trip_id,
        time=icev_trip.time[idx].copy(),
        velocity=icev_trip.channel("velocity")[idx].copy(),
        actuation_ev=u_hat,
        emissions_ev=e_hat,
        emissions_icev=e_icev[idx].copy(),
    )
