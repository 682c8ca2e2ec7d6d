import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from metricdae import MetricDAE
from metricdae.data import generate_synthetic
from metricdae.preprocess import Scaler


@pytest.fixture(scope="module")
def corpus():
    ds = generate_synthetic(300, seed=0)
    return Scaler().fit_transform(ds.features), ds.activation


def params(model):
    return [a.tobytes() for a in model.encoder.arrays() + model.decoder.arrays()]


def test_clone_keeps_params():
    est = MetricDAE(latent_dim=3, hidden_layers=(8,), metric_weight=0.5, random_state=4)
    c = clone(est)
    assert c.get_params() == est.get_params()
    assert not hasattr(c, "model_")


def test_transform_before_fit():
    with pytest.raises(NotFittedError):
        MetricDAE().transform(np.zeros((2, 88)))


def test_fit_is_deterministic(corpus):
    x, y = corpus
    a = MetricDAE(epochs=3, random_state=1).fit(x, y)
    b = MetricDAE(epochs=3, random_state=1).fit(x, y)
    assert params(a.model_) == params(b.model_)
    c = MetricDAE(epochs=3, random_state=2).fit(x, y)
    assert params(a.model_) != params(c.model_)


def test_refit_reproduces(corpus):
    x, y = corpus
    ss = np.random.SeedSequence(9, spawn_key=(2,))
    est = MetricDAE(epochs=2, random_state=ss)
    first = params(est.fit(x, y).model_)
    assert params(est.fit(x, y).model_) == first


def test_transform_is_noise_free(corpus):
    x, _ = corpus
    est = MetricDAE(epochs=2, random_state=0).fit(x)
    assert est.transform(x).tobytes() == est.transform(x).tobytes()
    assert est.transform(x).shape == (x.shape[0], 2)


def test_training_reduces_reconstruction(corpus):
    x, _ = corpus
    short = MetricDAE(epochs=1, random_state=0).fit(x)
    long = MetricDAE(epochs=30, random_state=0).fit(x)
    assert long.reconstruction_error(x) < short.reconstruction_error(x)
    assert long.history_[-1].rec < long.history_[0].rec


def test_metric_history_recorded(corpus):
    x, y = corpus
    est = MetricDAE(epochs=2, random_state=0).fit(x, y)
    assert len(est.history_) == 2
    assert est.history_[0].metric > 0 and np.isfinite(est.history_[0].p_mean)
    plain = MetricDAE(epochs=2, random_state=0).fit(x)
    assert plain.history_[0].metric == 0.0


def test_zero_weight_ignores_labels(corpus):
    x, y = corpus
    a = MetricDAE(epochs=2, metric_weight=0.0, random_state=3).fit(x, y)
    b = MetricDAE(epochs=2, metric_weight=0.0, random_state=3).fit(x)
    assert params(a.model_) == params(b.model_)


def test_n_params(corpus):
    x, _ = corpus
    assert MetricDAE(epochs=1, random_state=0).fit(x).n_params_ == 442


def test_label_length_checked(corpus):
    x, y = corpus
    with pytest.raises(ValueError):
        MetricDAE(epochs=1).fit(x, y[:-1])


def test_diverging_training_raises(corpus):
    x, _ = corpus
    with pytest.raises(FloatingPointError):
        MetricDAE(epochs=50, learning_rate=1e200, random_state=0).fit(x * 1e150)
