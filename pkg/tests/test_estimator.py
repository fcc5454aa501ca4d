import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bdrnilm.estimator import Seq2PointDisaggregator, Seq2PointRegressor, SlidingWindowTransformer

SMALL = dict(window_length=21, first_filters=4, filters=4, n_blocks=2, batch_size=32, max_epochs=2)


def test_transformer_shapes():
    x = np.arange(10.0)
    assert SlidingWindowTransformer(5).fit_transform(x).shape == (6, 5)
    padded = SlidingWindowTransformer(5, pad="zero-halfwindow", pad_value=-1).fit_transform(x)
    assert padded.shape == (10, 5)
    assert padded[0].tolist() == [-1, -1, 0, 1, 2]
    assert SlidingWindowTransformer(3, stride=4).transform(x)[:, 1].tolist() == [1, 5]


def test_transformer_errors():
    with pytest.raises(ValueError, match="odd"):
        SlidingWindowTransformer(4).transform(np.zeros(10))
    with pytest.raises(ValueError, match="shorter"):
        SlidingWindowTransformer(11).transform(np.zeros(10))
    with pytest.raises(ValueError, match="pad"):
        SlidingWindowTransformer(3, pad="mirror").transform(np.zeros(10))


def test_params_round_trip():
    reg = Seq2PointRegressor(**SMALL)
    assert reg.get_params()["filters"] == 4
    twin = clone(reg)
    assert twin.get_params() == reg.get_params()
    assert reg.set_params(dropout_rate=0.0).dropout_rate == 0.0


def test_regressor_fit_predict():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((80, 21))
    y = X[:, 10] * 0.5
    reg = Seq2PointRegressor(**SMALL).fit(X, y)
    assert reg.n_features_in_ == 21
    assert reg.predict(X).shape == (80,)
    assert np.isfinite(reg.score(X, y))
    with pytest.raises(NotFittedError):
        Seq2PointRegressor(**SMALL).predict(X)
    with pytest.raises(ValueError):
        reg.fit(X, y[:-1])
    with pytest.raises(ValueError):
        reg.predict(X[:, :20])


def test_disaggregator():
    rng = np.random.default_rng(1)
    app = np.where(rng.random(600) < 0.05, 1000.0, 0.0)
    agg = app + 100 + rng.normal(0, 5, 600)
    model = Seq2PointDisaggregator(Seq2PointRegressor(**SMALL), target_stats=(0, 1000), stride=2)
    model.fit(agg, app)
    out = model.predict(agg[:50])
    assert out.shape == (50,) and np.all(out >= 0)
    assert model.score(agg, app) <= 0
    assert model.stats_target_.std == 1000
