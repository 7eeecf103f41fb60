import numpy as np
import pytest

from database.models import Activation, LossKind, MlpConfig, OptimizerKind, TrainConfig
from emulators.mlp import ParamGroup
from emulators.training import (Adam, AdamW, EarlyStopping, TrainData, couple_l2, huber_loss,
                                mse_loss, step_lr_factor, train)
from utils.errors import TrainingError, ValidationError


def linear_data(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    Y = (X[:, 0] - 2.0 * X[:, 1])[:, None] + 0.01 * rng.normal(size=(n, 1))
    cut = int(0.8 * n)
    return TrainData(X[:cut], Y[:cut], X[cut:], Y[cut:])


MLP = MlpConfig(input_dim=2, output_dim=1, hidden_layers=1, width=16,
                activation=Activation.TANH, learning_rate=1e-2)


def test_losses():
    value, grad = mse_loss(np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]]))
    assert value == 2.5
    np.testing.assert_allclose(grad, [[1.0, 2.0]])

    value, grad = huber_loss(np.array([0.5, 3.0]), np.zeros(2), delta=1.0)
    assert value == pytest.approx((0.125 + 2.5) / 2)
    np.testing.assert_allclose(grad, [0.25, 0.5])

    with pytest.raises(ValidationError):
        mse_loss(np.zeros((2, 1)), np.zeros((2, 2)))


def test_adam_zero_gradient_leaves_parameters():
    p = np.array([1.0, -2.0])
    group = ParamGroup([p], lr=0.1, weight_decay=0.0)
    optimizer = Adam([group])
    optimizer.step([[np.zeros(2)]])
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_moves_by_learning_rate():
    p = np.array([1.0, -2.0])
    optimizer = Adam([ParamGroup([p], lr=0.1, weight_decay=0.0)])
    optimizer.step([[np.array([3.0, -0.5])]])
    np.testing.assert_allclose(p, [0.9, -1.9], atol=1e-6)


def test_none_gradient_skips_parameter():
    a, b = np.array([1.0]), np.array([1.0])
    optimizer = AdamW([ParamGroup([a, b], lr=0.1, weight_decay=0.5)])
    optimizer.step([[np.array([1.0]), None]])
    assert b[0] == 1.0
    assert optimizer.t[0] == [1, 0]


def test_adamw_decay_is_decoupled():
    p = np.array([2.0])
    optimizer = AdamW([ParamGroup([p], lr=0.1, weight_decay=0.5)])
    optimizer.step([[np.zeros(1)]])
    assert p[0] == pytest.approx(2.0 * (1 - 0.05))


def test_adam_l2_is_coupled_through_the_gradient():
    p = np.array([2.0])
    group = ParamGroup([p], lr=0.1, weight_decay=0.5)
    coupled = couple_l2([group], [[np.zeros(1)]])
    assert coupled[0][0][0] == 1.0
    assert couple_l2([group], [[None]]) == [[None]]


def test_step_schedule():
    factors = [step_lr_factor(epoch, 3, 0.05) for epoch in range(1, 8)]
    assert factors[:3] == [1.0, 1.0, 1.0]
    assert 1e-4 * factors[3] == pytest.approx(5e-6)
    assert factors[6] == pytest.approx(0.05 ** 2)
    assert step_lr_factor(100, None, 0.05) == 1.0


def test_early_stopping_after_patience():
    stopper = EarlyStopping(patience=20, min_delta=0.0)
    for value in [5.0, 4.0, 3.0]:
        assert stopper.update(value)
    for epoch in range(19):
        stopper.update(3.0)
        assert not stopper.should_stop
    stopper.update(3.5)
    assert stopper.should_stop
    assert stopper.best_epoch == 3


def test_min_delta_requires_real_improvement():
    stopper = EarlyStopping(patience=2, min_delta=0.1)
    stopper.update(1.0)
    assert not stopper.update(0.95)
    assert stopper.update(0.85)


def test_training_reduces_validation_loss_and_restores_best():
    data = linear_data()
    cfg = TrainConfig(loss=LossKind.MSE, max_epochs=150, patience=150, min_delta=0.0, seed=3)
    model, record = train(data, MLP, cfg)

    assert record.best_val_loss < record.val_losses[0] / 5
    assert record.restored_best
    assert record.best_val_loss == min(record.val_losses)
    assert record.val_losses[record.best_epoch - 1] == record.best_val_loss
    restored, _ = mse_loss(model.predict(data.X_val), data.Y_val)
    assert restored == record.best_val_loss
    assert record.final_train_rmse is not None
    assert record.config["mlp"]["width"] == 16


def test_training_is_deterministic_per_seed():
    data = linear_data(seed=1)
    cfg = TrainConfig(loss=LossKind.HUBER, optimizer=OptimizerKind.ADAMW, batch_size=16,
                      max_epochs=5, seed=7)
    a, ra = train(data, MLP.model_copy(update={"dropout": 0.2}), cfg)
    b, rb = train(data, MLP.model_copy(update={"dropout": 0.2}), cfg)
    assert ra.val_losses == rb.val_losses
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))


def test_learning_rate_trace_follows_schedule():
    cfg = TrainConfig(loss=LossKind.MSE, max_epochs=6, patience=10, lr_step_size=3,
                      lr_gamma=0.05, seed=0)
    _, record = train(linear_data(), MLP.model_copy(update={"learning_rate": 1e-4}), cfg)
    assert record.learning_rates[:3] == [1e-4] * 3
    assert record.learning_rates[3] == pytest.approx(5e-6)


def test_protocol_presets():
    cfg = TrainConfig.radiation_protocol(seed=0)
    assert (cfg.batch_size, cfg.max_epochs, cfg.patience) == (1024, 12, 3)
    proxy = TrainConfig.proxy_protocol(seed=2)
    assert proxy.batch_size is None and proxy.max_epochs == 300 and proxy.seed == 2


def test_non_finite_loss_raises():
    data = linear_data()
    bad = TrainData(data.X_train, np.full_like(data.Y_train, np.nan), data.X_val, data.Y_val)
    with pytest.raises(TrainingError) as info:
        train(bad, MLP, TrainConfig(loss=LossKind.MSE, max_epochs=3))
    assert info.value.epoch == 1


def test_train_data_validation():
    with pytest.raises(ValidationError):
        TrainData(np.zeros((0, 2)), np.zeros((0, 1)), np.zeros((2, 2)), np.zeros((2, 1)))
    with pytest.raises(ValidationError):
        TrainData(np.zeros((3, 2)), np.zeros((2, 1)), np.zeros((2, 2)), np.zeros((2, 1)))
