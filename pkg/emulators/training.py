"""Losses, Adam/AdamW, step schedule, early stopping and the training loop."""
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from database.models import LossKind, MlpConfig, OptimizerKind, TrainConfig, TrainRecord
from emulators.mlp import MlpModel, ParamGroup
from utils.errors import TrainingError, ValidationError
from utils.logger import logger

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValidationError(f"Prediction shape {pred.shape} differs from target shape {target.shape}")
    return pred, target


def mse_loss(pred, target):
    """Mean squared residual over all elements and its gradient"""
    pred, target = _check_pair(pred, target)
    r = pred - target
    return float(np.mean(r * r)), 2.0 * r / r.size


def huber_loss(pred, target, delta=1.0):
    """Quadratic below delta, linear above; mean over all elements"""
    pred, target = _check_pair(pred, target)
    r = pred - target
    a = np.abs(r)
    value = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(np.mean(value)), np.clip(r, -delta, delta) / r.size


def make_loss(kind: LossKind, delta: float = 1.0):
    if LossKind(kind) == LossKind.MSE:
        return mse_loss
    return lambda pred, target: huber_loss(pred, target, delta)


class Adam:
    """Adam without internal weight decay.

    The L2 coupling is added to the gradient by the caller (see
    ``couple_l2``); a zero gradient therefore leaves the parameters unchanged.
    A ``None`` gradient skips the parameter for that step.
    """

    decoupled = False

    def __init__(self, groups: Sequence[ParamGroup], betas=(BETA1, BETA2), eps=EPSILON):
        self.groups = list(groups)
        self.base_lrs = [g.lr for g in self.groups]
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [[np.zeros_like(p) for p in g.params] for g in self.groups]
        self.v = [[np.zeros_like(p) for p in g.params] for g in self.groups]
        self.t = [[0 for _ in g.params] for g in self.groups]

    def set_lr_factor(self, factor: float):
        for group, base in zip(self.groups, self.base_lrs):
            group.lr = base * factor

    def _decay(self, group: ParamGroup, p):
        pass

    def step(self, grads):
        """Update every parameter in place; ``grads`` mirrors the group layout"""
        for gi, (group, group_grads) in enumerate(zip(self.groups, grads)):
            if group_grads is None:
                continue
            for pi, (p, g) in enumerate(zip(group.params, group_grads)):
                if g is None:
                    continue
                self._decay(group, p)
                self.t[gi][pi] += 1
                t = self.t[gi][pi]
                m, v = self.m[gi][pi], self.v[gi][pi]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                m_hat = m / (1.0 - self.beta1 ** t)
                v_hat = v / (1.0 - self.beta2 ** t)
                p -= group.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class AdamW(Adam):
    """Adam with decoupled weight decay p <- p (1 - lr wd) before the moment step"""

    decoupled = True

    def _decay(self, group: ParamGroup, p):
        if group.weight_decay:
            p *= 1.0 - group.lr * group.weight_decay


def make_optimizer(kind: OptimizerKind, groups: Sequence[ParamGroup]) -> Adam:
    return AdamW(groups) if OptimizerKind(kind) == OptimizerKind.ADAMW else Adam(groups)


def couple_l2(groups: Sequence[ParamGroup], grads):
    """Add weight_decay * p to every gradient (Adam's L2 coupling)"""
    coupled = []
    for group, group_grads in zip(groups, grads):
        if group_grads is None or not group.weight_decay:
            coupled.append(group_grads)
            continue
        coupled.append([None if g is None else g + group.weight_decay * p
                        for p, g in zip(group.params, group_grads)])
    return coupled


def step_lr_factor(epoch: int, step_size: Optional[int], gamma: float) -> float:
    """gamma ** ((epoch - 1) // step_size) for 1-based epochs"""
    if not step_size:
        return 1.0
    return gamma ** ((epoch - 1) // step_size)


class EarlyStopping:
    """Stops after ``patience`` consecutive epochs without a min_delta improvement"""

    def __init__(self, patience: int, min_delta: float = 0.0):
        if patience < 1:
            raise ValidationError("patience must be at least 1")
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch = 0
        self.counter = 0
        self.epoch = 0

    def update(self, value: float) -> bool:
        """Record one epoch; True when it is the new best"""
        self.epoch += 1
        if value < self.best - self.min_delta:
            self.best = value
            self.best_epoch = self.epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


class Trainable(Protocol):
    def parameter_groups(self) -> List[ParamGroup]: ...

    def loss_and_grads(self, X, Y, loss, rng=None, train_mode=True): ...

    def predict(self, X) -> np.ndarray: ...

    def snapshot(self): ...

    def restore(self, snapshot): ...


@dataclass(frozen=True)
class TrainData:
    """Train and validation matrices"""
    X_train: np.ndarray
    Y_train: np.ndarray
    X_val: np.ndarray
    Y_val: np.ndarray

    def __post_init__(self):
        for name in ('X_train', 'Y_train', 'X_val', 'Y_val'):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim == 1:
                value = value[:, None]
            object.__setattr__(self, name, value)
        if self.X_train.shape[0] == 0 or self.X_val.shape[0] == 0:
            raise ValidationError("Train and validation splits must be non-empty")
        if self.X_train.shape[0] != self.Y_train.shape[0] or self.X_val.shape[0] != self.Y_val.shape[0]:
            raise ValidationError("Feature and target row counts differ")


def _batches(n: int, batch_size: Optional[int], seed: int, epoch: int):
    if batch_size is None or batch_size >= n:
        return [np.arange(n)]
    order = np.random.default_rng(np.random.SeedSequence([seed, 1, epoch])).permutation(n)
    return [order[start:start + batch_size] for start in range(0, n, batch_size)]


def fit(model: Trainable, data: TrainData, train_cfg: TrainConfig,
        config_snapshot: Optional[dict] = None, cell: Optional[str] = None) -> TrainRecord:
    """Train in place and restore the best-validation weights"""
    loss = make_loss(train_cfg.loss, train_cfg.huber_delta)
    groups = model.parameter_groups()
    optimizer = make_optimizer(train_cfg.optimizer, groups)
    stopper = EarlyStopping(train_cfg.patience, train_cfg.min_delta)
    record = TrainRecord(config=config_snapshot or {"training": train_cfg.model_dump(mode='json')},
                         seed=train_cfg.seed)
    best = model.snapshot()
    n = data.X_train.shape[0]

    for epoch in range(1, train_cfg.max_epochs + 1):
        optimizer.set_lr_factor(step_lr_factor(epoch, train_cfg.lr_step_size, train_cfg.lr_gamma))
        record.learning_rates.append(groups[0].lr)

        total = 0.0
        for b, idx in enumerate(_batches(n, train_cfg.batch_size, train_cfg.seed, epoch)):
            rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 2, epoch, b]))
            value, grads = model.loss_and_grads(data.X_train[idx], data.Y_train[idx], loss, rng)
            if not np.isfinite(value):
                raise TrainingError(f"Training loss became non-finite at epoch {epoch}", epoch=epoch)
            if not optimizer.decoupled:
                grads = couple_l2(groups, grads)
            optimizer.step(grads)
            total += value * idx.size
        train_loss = total / n

        val_loss, _ = loss(model.predict(data.X_val), data.Y_val)
        if not np.isfinite(val_loss):
            raise TrainingError(f"Validation loss became non-finite at epoch {epoch}", epoch=epoch)
        record.train_losses.append(train_loss)
        record.val_losses.append(val_loss)
        logger.log_training_epoch(cell, epoch, train_loss, val_loss, groups[0].lr)

        if stopper.update(val_loss):
            best = model.snapshot()
        if stopper.should_stop:
            record.stopped_early = True
            break

    model.restore(best)
    residual = model.predict(data.X_train) - data.Y_train
    record.best_epoch = stopper.best_epoch
    record.best_val_loss = stopper.best
    record.restored_best = True
    record.final_train_rmse = float(np.sqrt(np.mean(residual ** 2)))
    logger.info(f"Training finished after {len(record.val_losses)} epochs; best epoch {record.best_epoch} "
                f"(val {record.best_val_loss:.6g})", cell)
    return record


def train(data: TrainData, mlp_cfg: MlpConfig, train_cfg: TrainConfig,
          cell: Optional[str] = None) -> Tuple[MlpModel, TrainRecord]:
    """Initialise an MLP from the training seed and fit it"""
    model = MlpModel.initialize(mlp_cfg, np.random.SeedSequence([train_cfg.seed, 0]))
    snapshot = {"mlp": mlp_cfg.model_dump(mode='json'), "training": train_cfg.model_dump(mode='json')}
    record = fit(model, data, train_cfg, snapshot, cell)
    return model, record
