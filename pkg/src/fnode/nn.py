"""Fully connected vector-field network with hand-written backprop and AdamW."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalError, ShapeError

ACTIVATIONS = ("tanh", "gelu")
LOSS_FORMS = ("mean_squared", "mean_norm")

_GELU_C = math.sqrt(2.0 / math.pi)


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    inner = _GELU_C * (z + 0.044715 * z**3)
    return 0.5 * z * (1.0 + np.tanh(inner))


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    inner = _GELU_C * (z + 0.044715 * z**3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * z**2)


@dataclass
class MlpModel:
    """Affine layers with an activation between them; the last layer is affine.

    Inputs are standardised with ``input_mean``/``input_std`` before the
    first layer.  Weights are stored ``(fan_in, fan_out)``.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    seed: int = 0
    input_mean: np.ndarray = None
    input_std: np.ndarray = None

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("need one weight matrix and bias per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise ShapeError(f"layer {i} has shapes {w.shape}, {b.shape}")
        if self.input_mean is None:
            self.input_mean = np.zeros(self.n_inputs)
        if self.input_std is None:
            self.input_std = np.ones(self.n_inputs)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_normalization(self, mean, std) -> None:
        std = np.asarray(std, dtype=float).copy()
        std[~(std > 1e-12)] = 1.0
        self.input_mean = np.asarray(mean, dtype=float).copy()
        self.input_std = std

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.seed,
            self.input_mean.copy(),
            self.input_std.copy(),
        )

    def forward(self, x) -> np.ndarray:
        return mlp_forward(self, x)

    __call__ = forward


def mlp_init(layer_sizes, seed: int = 0, activation: str = "tanh") -> MlpModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise InvalidInputError(f"need at least two positive layer sizes, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, activation, seed)


def _forward_cache(model: MlpModel, x: np.ndarray):
    h = (x - model.input_mean) / model.input_std
    cache = [h]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i == last:
            return z, cache
        h = _act(model.activation, z)
        cache.append((z, h))
    raise AssertionError("unreachable")


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """Evaluate the network on one input vector or a ``(batch, n_inputs)`` array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != model.n_inputs:
        raise ShapeError(f"expected inputs of width {model.n_inputs}, got shape {x.shape}")
    out, _ = _forward_cache(model, xb)
    return out[0] if single else out


def mlp_backward(model: MlpModel, cache, grad_out: np.ndarray):
    """Reverse pass.  Returns ``(param_grads, grad_inputs)``.

    ``param_grads`` follows :attr:`MlpModel.params` ordering.
    """
    n_layers = len(model.weights)
    grads = [None] * (2 * n_layers)
    g = grad_out
    for i in range(n_layers - 1, -1, -1):
        h_in = cache[0] if i == 0 else cache[i][1]
        grads[2 * i] = h_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ model.weights[i].T
        if i > 0:
            z, a = cache[i]
            g = g * _act_grad(model.activation, z, a)
    return grads, g / model.input_std


def residual_loss(residual: np.ndarray, loss_form: str = "mean_squared"):
    """Loss value and its gradient with respect to the residual rows."""
    n = residual.shape[0]
    if loss_form == "mean_squared":
        return float(np.sum(residual**2) / n), 2.0 * residual / n
    if loss_form == "mean_norm":
        norms = np.sqrt(np.sum(residual**2, axis=1, keepdims=True))
        safe = np.where(norms > 0, norms, 1.0)
        return float(np.sum(norms) / n), np.where(norms > 0, residual / safe, 0.0) / n
    raise InvalidInputError(f"unknown loss form {loss_form!r}")


def loss_and_grad(model: MlpModel, inputs, targets, loss_form: str = "mean_squared"):
    """Gradient-matching loss over a batch and its parameter gradients.

    ``mean_squared`` is ``mean ||target - F(x)||^2``; ``mean_norm`` uses
    the unsquared Euclidean norm.
    """
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != model.n_inputs:
        raise ShapeError(f"inputs must be (batch>0, {model.n_inputs}), got {x.shape}")
    if y.shape != (x.shape[0], model.n_outputs):
        raise ShapeError(f"targets must be ({x.shape[0]}, {model.n_outputs}), got {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericalError("non-finite inputs or targets")
    out, cache = _forward_cache(model, x)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite network output")
    loss, g = residual_loss(out - y, loss_form)
    if not math.isfinite(loss):
        raise NumericalError("non-finite loss")
    grads, _ = mlp_backward(model, cache, g)
    return loss, grads


@dataclass
class AdamState:
    """Moments and hyperparameters for Adam with decoupled weight decay."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel, lr: float = 1e-3, weight_decay: float = 1e-5) -> "AdamState":
        zeros = [np.zeros_like(p) for p in model.params]
        return cls(zeros, [z.copy() for z in zeros], 0, lr, weight_decay)


def adam_step(model: MlpModel, grads, state: AdamState):
    """One in-place AdamW update; returns ``(model, state)``."""
    params = model.params
    if len(grads) != len(params):
        raise ShapeError("gradient list does not match model parameters")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    decay = 1.0 - state.lr * state.weight_decay
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if decay != 1.0:
            p *= decay
        p -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return model, state
