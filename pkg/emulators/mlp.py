"""Feed-forward regression network with hand-written backpropagation."""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import ndtr

from database.models import Activation, MlpConfig
from utils.errors import ValidationError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def relu(z):
    return np.maximum(z, 0.0)


def relu_grad(z):
    return (z > 0).astype(float)


def gelu(z):
    """Exact GELU z * Phi(z)"""
    return z * ndtr(z)


def gelu_grad(z):
    return ndtr(z) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def tanh_grad(z):
    return 1.0 - np.tanh(z) ** 2


ACTIVATIONS = {
    Activation.RELU: (relu, relu_grad),
    Activation.GELU: (gelu, gelu_grad),
    Activation.TANH: (np.tanh, tanh_grad),
}


def init_bound(activation: Activation, fan_in: int, fan_out: int) -> float:
    """Uniform init bound: sqrt(6/fan_in) for ReLU/GELU, Xavier for tanh"""
    if activation == Activation.TANH:
        return np.sqrt(6.0 / (fan_in + fan_out))
    return np.sqrt(6.0 / fan_in)


@dataclass
class ParamGroup:
    """Parameters sharing one learning rate and weight decay"""
    params: List[np.ndarray]
    lr: float
    weight_decay: float
    name: str = "default"


@dataclass
class ForwardCache:
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)


class MlpModel:
    """Dense MLP: input -> width^L -> output, linear output layer.

    Weights are stored as (fan_in, fan_out) so a layer computes ``h @ W + b``.
    """

    def __init__(self, config: MlpConfig, weights, biases):
        self.config = config
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self._check_shapes()

    @classmethod
    def initialize(cls, config: MlpConfig, seed) -> "MlpModel":
        rng = np.random.default_rng(seed)
        dims = cls.layer_dims(config)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = init_bound(config.activation, fan_in, fan_out)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(config, weights, biases)

    @staticmethod
    def layer_dims(config: MlpConfig) -> List[int]:
        return [config.input_dim] + [config.width] * config.hidden_layers + [config.output_dim]

    def _check_shapes(self):
        dims = self.layer_dims(self.config)
        expected = list(zip(dims[:-1], dims[1:]))
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ValidationError(f"Expected {len(expected)} layers, got {len(self.weights)}")
        for i, (shape, w, b) in enumerate(zip(expected, self.weights, self.biases)):
            if w.shape != shape or b.shape != (shape[1],):
                raise ValidationError(f"Layer {i} has shape {w.shape}/{b.shape}, expected {shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"Layer {i} has non-finite parameters")

    @property
    def n_params(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def parameter_groups(self) -> List[ParamGroup]:
        return [ParamGroup(self.parameters(), self.config.learning_rate, self.config.weight_decay)]

    def snapshot(self):
        return [p.copy() for p in self.parameters()]

    def restore(self, snapshot):
        for p, saved in zip(self.parameters(), snapshot):
            p[...] = saved

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.config.input_dim:
            raise ValidationError(f"Expected input with {self.config.input_dim} columns, got shape {X.shape}")
        return X

    def forward_cached(self, X, train_mode=False, rng=None):
        """Forward pass that keeps what backward() needs"""
        X = self._check_input(X)
        act, _ = ACTIVATIONS[self.config.activation]
        rate = self.config.dropout if train_mode else 0.0
        if rate > 0 and rng is None:
            raise ValidationError("Train-mode dropout needs a random generator")

        cache = ForwardCache()
        h = X
        n_hidden = len(self.weights) - 1
        for i in range(n_hidden):
            cache.inputs.append(h)
            z = h @ self.weights[i] + self.biases[i]
            cache.pre_activations.append(z)
            h = act(z)
            if rate > 0:
                mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
                h = h * mask
                cache.masks.append(mask)
            else:
                cache.masks.append(None)
        cache.inputs.append(h)
        return h @ self.weights[-1] + self.biases[-1], cache

    def forward(self, X, train_mode=False, seed=0):
        rng = np.random.default_rng(seed) if train_mode else None
        out, _ = self.forward_cached(X, train_mode, rng)
        return out

    def predict(self, X):
        """Deterministic eval-mode forward"""
        return self.forward(X, train_mode=False)

    def backward(self, cache: ForwardCache, grad_out) -> List[np.ndarray]:
        """Gradients in parameters() order given dLoss/dOutput"""
        _, act_grad = ACTIVATIONS[self.config.activation]
        grads = [None] * (2 * len(self.weights))
        delta = np.asarray(grad_out, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = cache.inputs[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i == 0:
                break
            delta = delta @ self.weights[i].T
            mask = cache.masks[i - 1]
            if mask is not None:
                delta = delta * mask
            delta = delta * act_grad(cache.pre_activations[i - 1])
        return grads

    def loss_and_grads(self, X, Y, loss, rng=None, train_mode=True):
        """Loss value and per-group gradient lists"""
        pred, cache = self.forward_cached(X, train_mode, rng)
        value, grad_out = loss(pred, Y)
        return value, [self.backward(cache, grad_out)]
