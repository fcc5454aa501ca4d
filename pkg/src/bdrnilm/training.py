"""Training loop, midpoint prediction and full-sequence disaggregation."""
from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from threadpoolctl import threadpool_limits

from . import numeric as F
from ._validation import NonFiniteError, check_positive_int
from .data import AlignedPair, RawSeries, WindowedDataset, denormalize, normalize

logger = logging.getLogger(__name__)

WORKERS_ENV = "BDRN_WORKERS"


def worker_count():
    """Number of BLAS threads to use; ``BDRN_WORKERS`` overrides the default of 1."""
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        return check_positive_int(int(value), WORKERS_ENV)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {value!r}") from None


@contextmanager
def limited_workers():
    with threadpool_limits(limits=worker_count()):
        yield


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 512
    max_epochs: int = 50
    early_stop_patience: int = 5
    shuffle_seed: int = 0
    validation_fraction: float = 0.1
    max_steps: int | None = None

    def validate(self):
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.early_stop_patience, "early_stop_patience")
        check_positive_int(self.max_epochs, "max_epochs")
        if self.max_steps is not None:
            check_positive_int(self.max_steps, "max_steps")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        return self


@dataclass
class History:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    steps: int = 0
    initial_val_mse: float = float("nan")

    def records(self):
        return [
            {"epoch": i, "train_mse": t, "val_mse": v, "seconds": s}
            for i, (t, v, s) in enumerate(zip(self.train_mse, self.val_mse, self.seconds))
        ]

    def to_dict(self):
        return {
            "best_epoch": self.best_epoch,
            "steps": self.steps,
            "initial_val_mse": self.initial_val_mse,
            "epochs": self.records(),
        }


def _as_dataset(data, window_length=None):
    if isinstance(data, WindowedDataset):
        return data
    X, y = data
    X = np.asarray(X, dtype=np.float32)
    return WindowedDataset(X.shape[1], X, np.asarray(y, dtype=np.float64))


def predict_midpoints(model, dataset, batch_size=512):
    """Infer-mode predictions, one normalized value per window, order kept."""
    X = dataset.inputs if isinstance(dataset, WindowedDataset) else np.asarray(dataset)
    if X.ndim != 2 or X.shape[1] != model.config.window_length:
        raise ValueError(
            f"windows of shape {X.shape} do not match model window {model.config.window_length}"
        )
    out = np.empty(len(X), dtype=np.float64)
    with limited_workers():
        for lo in range(0, len(X), batch_size):
            batch = X[lo:lo + batch_size]
            out[lo:lo + len(batch)] = model.forward(batch[:, None, :], mode=F.INFER)[:, 0]
    return out


def evaluate_mse(model, dataset, batch_size=512):
    pred = predict_midpoints(model, dataset, batch_size)
    return float(np.mean((pred - dataset.targets) ** 2))


def train(model, train_set, val_set, config=None, log_every=0):
    """Fit ``model`` with Adam on the MSE; keep the best-validation snapshot.

    Each epoch shuffles the training rows with a permutation seeded by
    ``(shuffle_seed, epoch)``. Training stops after ``early_stop_patience``
    epochs without a strictly lower validation loss, after ``max_epochs``,
    or once ``max_steps`` updates were made. Returns ``(best_model, history)``;
    the model passed in holds the final (not necessarily best) state.
    """
    config = (config or TrainConfig()).validate()
    train_set = _as_dataset(train_set)
    val_set = _as_dataset(val_set)
    w = model.config.window_length
    for name, ds in (("training", train_set), ("validation", val_set)):
        if len(ds) == 0:
            raise ValueError(f"{name} set is empty")
        if ds.window_length != w:
            raise ValueError(f"{name} windows have length {ds.window_length}, model expects {w}")

    dtype = model.dtype
    states = {k: F.AdamState.zeros_like(v) for k, v in model.params.items()}
    history = History()
    best_model, best_val = model.copy(), np.inf
    stale = 0
    steps = 0
    n = len(train_set)
    history.initial_val_mse = evaluate_mse(model, val_set)
    with limited_workers():
        for epoch in range(config.max_epochs):
            tic = time.perf_counter()
            order = np.random.default_rng([config.shuffle_seed, epoch]).permutation(n)
            total = 0.0
            seen = 0
            for b, lo in enumerate(range(0, n, config.batch_size)):
                idx = order[lo:lo + config.batch_size]
                x = train_set.inputs[idx][:, None, :].astype(dtype, copy=False)
                y = train_set.targets[idx][:, None].astype(dtype)
                try:
                    out = model.forward(x, mode=F.TRAIN, seed=[config.shuffle_seed, steps])
                except NonFiniteError as exc:
                    raise NonFiniteError(f"{exc} at epoch {epoch}, batch {b}") from None
                loss, dout = F.mse_loss(out, y)
                if not np.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {b}")
                grads = model.backward(dout)
                for k, param in model.params.items():
                    F.adam_step(param, grads[k], states[k], config.learning_rate,
                                config.beta1, config.beta2, config.eps)
                total += loss * len(idx)
                seen += len(idx)
                steps += 1
                if log_every and steps % log_every == 0:
                    logger.info("epoch %d step %d loss %.6f", epoch, steps, loss)
                if config.max_steps is not None and steps >= config.max_steps:
                    break
            val = evaluate_mse(model, val_set)
            history.train_mse.append(total / seen)
            history.val_mse.append(val)
            history.seconds.append(time.perf_counter() - tic)
            history.steps = steps
            logger.info("epoch %d train_mse %.6f val_mse %.6f", epoch, total / seen, val)
            if not np.isfinite(val):
                raise NonFiniteError(f"non-finite validation loss at epoch {epoch}")
            if val < best_val:
                best_val, best_model, history.best_epoch = val, model.copy(), epoch
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
            if config.max_steps is not None and steps >= config.max_steps:
                break
    return best_model, history


def _segments(aggregate):
    if isinstance(aggregate, AlignedPair):
        return aggregate.aggregate, aggregate.segments()
    if isinstance(aggregate, RawSeries):
        values = aggregate.watts
    else:
        values = np.asarray(aggregate, dtype=np.float64).ravel()
    return values, [(0, len(values))]


def disaggregate(model, aggregate, stats_in, stats_target, batch_size=512):
    """Estimate the appliance trace in watts, one value per aggregate sample.

    Each gap-free stretch is padded with ``window // 2`` zero-watt samples on
    both sides, every position is predicted as a window midpoint, and the
    denormalized result is clamped at zero.
    """
    values, segments = _segments(aggregate)
    if len(values) == 0:
        raise ValueError("cannot disaggregate an empty series")
    w = model.config.window_length
    half = w // 2
    out = np.empty(len(values))
    with limited_workers():
        for begin, end in segments:
            padded = np.concatenate([np.zeros(half), values[begin:end], np.zeros(half)])
            views = sliding_window_view(normalize(padded, stats_in), w)
            for lo in range(0, len(views), batch_size):
                batch = views[lo:lo + batch_size]
                pred = model.forward(batch[:, None, :], mode=F.INFER)[:, 0]
                out[begin + lo:begin + lo + len(batch)] = pred
    return np.maximum(denormalize(out, stats_target), 0.0)
