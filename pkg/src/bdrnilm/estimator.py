"""scikit-learn style wrappers around the network and the data pipeline."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_odd, check_series, check_windows
from .data import PAD_HALF, PAD_NONE, AlignedPair, NormStats, make_windows
from .metrics import mae
from .network import NetworkConfig, build_network
from .training import TrainConfig, disaggregate, predict_midpoints, train


class SlidingWindowTransformer(TransformerMixin, BaseEstimator):
    """Turn a 1-d series into rows of ``window_length`` consecutive samples.

    ``pad="zero-halfwindow"`` pads ``window_length // 2`` values of
    ``pad_value`` on each side so there is one window per sample.
    """

    def __init__(self, window_length=599, stride=1, pad=PAD_NONE, pad_value=0.0):
        self.window_length = window_length
        self.stride = stride
        self.pad = pad
        self.pad_value = pad_value

    def fit(self, X, y=None):
        check_series(X, "X")
        return self

    def transform(self, X):
        series = check_series(X, "X")
        w = check_odd(self.window_length, "window_length")
        if self.pad == PAD_HALF:
            edge = np.full(w // 2, float(self.pad_value))
            series = np.concatenate([edge, series, edge])
        elif self.pad != PAD_NONE:
            raise ValueError(f"unknown pad mode {self.pad!r}")
        if len(series) < w:
            raise ValueError(f"series of length {len(series)} is shorter than window_length {w}")
        return sliding_window_view(series, w)[:: self.stride].copy()


class Seq2PointRegressor(RegressorMixin, BaseEstimator):
    """Window -> midpoint regressor backed by the dilated residual network.

    ``X`` holds normalized aggregate windows of shape (n_windows,
    window_length) and ``y`` the normalized appliance midpoints. The last
    ``validation_fraction`` of the rows (chronological order) drives early
    stopping.
    """

    def __init__(
        self,
        window_length=599,
        first_filters=128,
        filters=128,
        kernel_size=3,
        n_blocks=8,
        dropout_rate=0.1,
        learning_rate=1e-3,
        batch_size=512,
        max_epochs=50,
        early_stop_patience=5,
        validation_fraction=0.1,
        max_steps=None,
        random_state=0,
    ):
        self.window_length = window_length
        self.first_filters = first_filters
        self.filters = filters
        self.kernel_size = kernel_size
        self.n_blocks = n_blocks
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.max_steps = max_steps
        self.random_state = random_state

    def _network_config(self):
        return NetworkConfig(
            window_length=self.window_length,
            first_filters=self.first_filters,
            filters=self.filters,
            kernel_size=self.kernel_size,
            n_blocks=self.n_blocks,
            dropout_rate=self.dropout_rate,
        )

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            shuffle_seed=self.random_state,
            validation_fraction=self.validation_fraction,
            max_steps=self.max_steps,
        )

    def fit(self, X, y):
        X = check_windows(X, self.window_length)
        y = check_series(y, "y")
        if len(y) != len(X):
            raise ValueError(f"{len(X)} windows but {len(y)} targets")
        if len(X) < 2:
            raise ValueError("need at least two windows to hold out a validation row")
        cut = min(len(X) - 1, max(1, int(np.floor(len(X) * (1 - self.validation_fraction)))))
        net = build_network(self._network_config(), seed=self.random_state)
        self.network_, self.history_ = train(
            net, (X[:cut], y[:cut]), (X[cut:], y[cut:]), self._train_config()
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_windows(X, self.window_length, dtype=np.float32)
        return predict_midpoints(self.network_, X)


class Seq2PointDisaggregator(BaseEstimator):
    """Fit on an (aggregate, appliance) pair of watt series; predict watts.

    Aggregate statistics are taken from the training series unless given;
    appliance statistics likewise. Prediction pads each side with half a
    window of zero watts so the output has one value per input sample.
    """

    def __init__(self, regressor=None, target_stats=None, aggregate_stats=None, stride=1):
        self.regressor = regressor
        self.target_stats = target_stats
        self.aggregate_stats = aggregate_stats
        self.stride = stride

    def fit(self, aggregate, appliance):
        aggregate = check_series(aggregate, "aggregate")
        appliance = check_series(appliance, "appliance")
        if aggregate.shape != appliance.shape:
            raise ValueError("aggregate and appliance must have equal length")
        reg = clone(self.regressor) if self.regressor is not None else Seq2PointRegressor()
        self.stats_in_ = _as_stats(self.aggregate_stats) or NormStats.of(aggregate)
        self.stats_target_ = _as_stats(self.target_stats) or NormStats.of(appliance)
        ds = make_windows(
            AlignedPair.from_series(aggregate, appliance), self.stats_in_, self.stats_target_,
            reg.window_length, self.stride,
        )
        self.regressor_ = reg.fit(ds.inputs, ds.targets)
        return self

    def predict(self, aggregate):
        check_is_fitted(self, "regressor_")
        aggregate = check_series(aggregate, "aggregate")
        return disaggregate(self.regressor_.network_, aggregate, self.stats_in_, self.stats_target_)

    def score(self, aggregate, appliance):
        """Negative MAE in watts (higher is better)."""
        return -mae(self.predict(aggregate), check_series(appliance, "appliance"))


def _as_stats(value):
    if value is None or isinstance(value, NormStats):
        return value
    mean, std = value
    return NormStats(float(mean), float(std))

