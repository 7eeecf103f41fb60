from functools import partial

import numpy as np
import pytest

from database.models import Activation, MlpConfig
from emulators.mlp import MlpModel, gelu, gelu_grad, init_bound
from emulators.training import huber_loss, mse_loss
from utils.errors import ValidationError


def small_config(activation=Activation.TANH, dropout=0.0, hidden_layers=2):
    return MlpConfig(input_dim=3, output_dim=2, hidden_layers=hidden_layers, width=5,
                     activation=activation, dropout=dropout)


def numeric_gradient(model, X, Y, loss, eps=1e-6):
    grads = []
    for p in model.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            saved = p[idx]
            p[idx] = saved + eps
            up, _ = loss(model.predict(X), Y)
            p[idx] = saved - eps
            down, _ = loss(model.predict(X), Y)
            p[idx] = saved
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def inputs_away_from_kinks(model, n=7, margin=1e-3):
    """Inputs whose hidden pre-activations all stay clear of zero"""
    for seed in range(500):
        X = np.random.default_rng(seed).normal(size=(n, model.config.input_dim))
        _, cache = model.forward_cached(X)
        if all(np.abs(z).min() > margin for z in cache.pre_activations):
            return X
    raise AssertionError("no kink-free inputs found")


@pytest.mark.parametrize("loss", [mse_loss, partial(huber_loss, delta=0.5)], ids=["mse", "huber"])
@pytest.mark.parametrize("hidden_layers", [1, 2, 3])
@pytest.mark.parametrize("activation", [Activation.RELU, Activation.TANH, Activation.GELU])
def test_backward_matches_finite_differences(activation, hidden_layers, loss):
    model = MlpModel.initialize(small_config(activation, hidden_layers=hidden_layers), seed=1)
    X = inputs_away_from_kinks(model)
    Y = np.random.default_rng(99).normal(size=(X.shape[0], 2))

    _, (analytic,) = model.loss_and_grads(X, Y, loss, train_mode=False)

    for a, n in zip(analytic, numeric_gradient(model, X, Y, loss)):
        np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-8)


def test_gelu_derivative():
    z = np.linspace(-4, 4, 41)
    numeric = (gelu(z + 1e-6) - gelu(z - 1e-6)) / 2e-6
    np.testing.assert_allclose(gelu_grad(z), numeric, atol=1e-8)
    assert gelu(np.array([0.0]))[0] == 0.0


def test_layer_shapes_and_parameter_count():
    model = MlpModel.initialize(small_config(), seed=0)
    assert [w.shape for w in model.weights] == [(3, 5), (5, 5), (5, 2)]
    assert model.n_params == 3 * 5 + 5 + 5 * 5 + 5 + 5 * 2 + 2
    assert all(np.all(b == 0) for b in model.biases)


def test_initialisation_bounds():
    assert init_bound(Activation.RELU, 6, 10) == 1.0
    assert init_bound(Activation.TANH, 2, 4) == 1.0
    model = MlpModel.initialize(small_config(Activation.RELU), seed=3)
    assert np.abs(model.weights[0]).max() <= np.sqrt(6.0 / 3)


def test_same_seed_same_weights():
    a = MlpModel.initialize(small_config(), seed=9)
    b = MlpModel.initialize(small_config(), seed=9)
    c = MlpModel.initialize(small_config(), seed=10)
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_dropout_only_in_train_mode():
    model = MlpModel.initialize(small_config(Activation.RELU, dropout=0.5), seed=2)
    X = np.random.default_rng(4).normal(size=(20, 3))

    np.testing.assert_array_equal(model.predict(X), model.predict(X))
    np.testing.assert_array_equal(model.forward(X, train_mode=True, seed=1),
                                  model.forward(X, train_mode=True, seed=1))
    assert not np.array_equal(model.forward(X, train_mode=True, seed=1), model.predict(X))
    with pytest.raises(ValidationError):
        model.forward_cached(X, train_mode=True, rng=None)


def test_zero_hidden_layers_is_linear():
    config = MlpConfig(input_dim=2, output_dim=1, hidden_layers=0, width=8)
    model = MlpModel(config, [np.array([[2.0], [-1.0]])], [np.array([0.5])])
    assert model.predict(np.array([[1.0, 3.0]]))[0, 0] == -0.5


def test_shape_validation():
    config = MlpConfig(input_dim=2, output_dim=1, hidden_layers=0, width=8)
    with pytest.raises(ValidationError):
        MlpModel(config, [np.zeros((3, 1))], [np.zeros(1)])
    with pytest.raises(ValidationError):
        MlpModel(config, [np.array([[np.inf], [0.0]])], [np.zeros(1)])
    model = MlpModel(config, [np.zeros((2, 1))], [np.zeros(1)])
    with pytest.raises(ValidationError):
        model.predict(np.zeros((4, 3)))
