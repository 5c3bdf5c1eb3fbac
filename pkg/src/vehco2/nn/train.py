from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, NumericError, Params, init_params, loss_and_grads, mse_loss, predict
from .optim import AdamState, TrainConfig, adam_step, cosine_warmup_lr

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, message: str = ""):
        super().__init__(f"training diverged at epoch {epoch}" + (f": {message}" if message else ""))
        self.epoch = epoch


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float  # NaN without a validation set


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, windows, targets,
          val_windows=None, val_targets=None) -> tuple[Params, list[EpochRecord]]:
    """Fit the network with mini-batch Adam under the cosine warm-up schedule.

    ``windows`` is ``(n, window_len, input_dim)`` and ``targets`` is
    ``(n, output_dim)``, both already scaled. Shuffling and initialization draw
    from one generator seeded with ``model_cfg.seed``, so a repeat run with the
    same inputs returns bitwise-identical parameters.
    """
    X = np.asarray(windows, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 3 or X.shape[1:] != (model_cfg.window_len, model_cfg.input_dim):
        raise ValueError(f"windows must be (n, {model_cfg.window_len}, {model_cfg.input_dim}), got {X.shape}")
    if len(X) != len(Y) or Y.shape[1] != model_cfg.output_dim:
        raise ValueError("windows and targets are not aligned")
    rng = np.random.default_rng(model_cfg.seed)
    params = init_params(model_cfg, rng)
    history: list[EpochRecord] = []
    if train_cfg.epochs == 0:
        return params, history
    if len(X) == 0:
        raise ValueError("no training windows")

    n = len(X)
    steps_per_epoch = math.ceil(n / train_cfg.batch_size)
    total = steps_per_epoch * train_cfg.epochs
    state = AdamState()
    step = 0
    has_val = val_windows is not None and len(val_windows) > 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for b in range(steps_per_epoch):
            idx = order[b * train_cfg.batch_size:(b + 1) * train_cfg.batch_size]
            try:
                loss, grads = loss_and_grads(params, X[idx], Y[idx], batch_id=(epoch, b))
            except NumericError as exc:
                raise TrainingDiverged(epoch, str(exc)) from exc
            lr = cosine_warmup_lr(step, total, train_cfg)
            params, state = adam_step(params, grads, state, lr, train_cfg.adam_beta1,
                                      train_cfg.adam_beta2, train_cfg.adam_eps)
            running += loss * len(idx)
            step += 1
        train_mse = running / n
        val_mse = mse_loss(predict(params, val_windows), np.asarray(val_targets).reshape(len(val_windows), -1)) \
            if has_val else math.nan
        if not np.isfinite(train_mse) or (has_val and not np.isfinite(val_mse)):
            raise TrainingDiverged(epoch, "non-finite epoch loss")
        history.append(EpochRecord(epoch, train_mse, val_mse))
        log.debug("epoch %d train_mse=%.6g val_mse=%.6g", epoch, train_mse, val_mse)
    return params, history
