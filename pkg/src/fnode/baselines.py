"""Comparison methods: central-difference gradient matching and unrolled-Euler NODE."""
from __future__ import annotations

import enum
import math
import time

import numpy as np

from .accel import kernels
from .errors import InvalidInputError, NumericalError, UnsupportedSamplingError
from .nn import AdamState, MlpModel, _forward_cache, adam_step, mlp_backward
from .systems import TimeSeriesDataset
from .training import FeatureBuilder, FeatureSpec, TrainConfig, init_model, split_dataset, train


class BaselineKind(str, enum.Enum):
    MID_GRADIENT = "mid"
    NODE_EULER = "node_euler"


def central_difference_targets(dataset: TimeSeriesDataset) -> np.ndarray:
    """Second-order central differences inside, first-order one-sided at the ends."""
    if not dataset.uniform:
        raise UnsupportedSamplingError("central differences need uniform sampling")
    if dataset.n_points < 3:
        raise InvalidInputError("central differences need at least 3 points")
    s = dataset.states
    flat = np.ascontiguousarray(s.reshape(s.shape[0], s.shape[1], -1))
    return np.asarray(kernels.central_difference(flat, dataset.dt)).reshape(s.shape)


def mid_train(model, dataset: TimeSeriesDataset, feature_spec: FeatureSpec, config: TrainConfig, val_dataset=None, history=None):
    """Gradient matching on central-difference targets; same loop as the Fourier trainer."""
    if val_dataset is None:
        dataset, val_dataset = split_dataset(dataset, config.val_fraction, config.seed)
    return train(
        model,
        dataset,
        feature_spec,
        config,
        val_dataset,
        targets=central_difference_targets(dataset),
        val_targets=central_difference_targets(val_dataset) if len(val_dataset) else None,
        history=history,
    )


def _segment_starts(n_samples: int, n_points: int, length: int, rng) -> np.ndarray:
    """Non-overlapping segments with a random phase per trajectory, shuffled."""
    pairs = []
    for i in range(n_samples):
        offset = int(rng.integers(length)) if n_points - 1 > length else 0
        for start in range(offset, n_points - length, length):
            pairs.append((i, start))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return pairs[rng.permutation(len(pairs))]


def euler_segment_loss(model: MlpModel, builder: FeatureBuilder, dataset: TimeSeriesDataset, pairs, length: int, with_grad: bool = True):
    """Mean squared error of ``length``-step Euler rollouts from observed states.

    Gradients are obtained by reverse-mode differentiation through the
    unrolled steps.  Returns ``(loss, grads)``; ``grads`` is ``None`` when
    ``with_grad`` is false.
    """
    dt = dataset.dt
    idx, st = pairs[:, 0], pairs[:, 1]
    s = dataset.states[idx, st]
    state_shape = s.shape
    caches = []
    residuals = []
    forward = model.forward if hasattr(model, "forward") else model
    for j in range(length):
        x = builder(s, dataset.controls[idx, st + j]).reshape(-1, builder.n_inputs)
        if with_grad:
            out, cache = _forward_cache(model, x)
            caches.append(cache)
        else:
            out = np.asarray(forward(x))
        s = s + dt * out.reshape(state_shape)
        residuals.append(s - dataset.states[idx, st + j + 1])
    res = np.stack(residuals)
    if not np.all(np.isfinite(res)):
        raise NumericalError("Euler rollout became non-finite")
    denom = len(pairs) * length
    loss = float(np.sum(res**2) / denom)
    if not with_grad:
        return loss, None
    grads = [np.zeros_like(p) for p in model.params]
    g = np.zeros(state_shape)
    for j in range(length - 1, -1, -1):
        g = g + 2.0 * res[j] / denom
        step_grads, g_in = mlp_backward(model, caches[j], dt * g.reshape(-1, builder.n_outputs))
        for acc, sg in zip(grads, step_grads):
            acc += sg
        if j:
            lead = state_shape if builder.system.kind.is_pde else state_shape[:-1]
            g = g + builder.adjoint(g_in.reshape(lead + (builder.n_inputs,)))
    return loss, grads


def node_euler_train(
    dataset: TimeSeriesDataset,
    model: MlpModel | None,
    config: TrainConfig,
    feature_spec: FeatureSpec | None = None,
    val_dataset: TimeSeriesDataset | None = None,
    segment_length: int = 10,
    history: list | None = None,
):
    """Discretise-then-optimise NODE baseline.

    Each epoch covers every observed transition once via non-overlapping
    segments with a random phase.  Segments whose rollout diverges are
    skipped and counted.  Returns ``(model, history, skipped)``.
    """
    if not dataset.uniform:
        raise UnsupportedSamplingError("the Euler baseline needs uniform sampling")
    if segment_length < 1 or segment_length >= dataset.n_points:
        raise InvalidInputError(f"segment length must be in [1, N-1], got {segment_length}")
    spec = feature_spec or FeatureSpec.for_system(dataset.system)
    builder = FeatureBuilder(dataset.system, spec)
    if val_dataset is None:
        dataset, val_dataset = split_dataset(dataset, config.val_fraction, config.seed)
    if model is None:
        model = init_model(builder, config)
        x = builder(dataset.states, dataset.controls).reshape(-1, builder.n_inputs)
        model.set_normalization(x.mean(axis=0), x.std(axis=0))
    history = [] if history is None else history
    rng = np.random.default_rng([config.seed, 0])
    adam = AdamState.for_model(model, config.lr, config.weight_decay)
    # about batch_size feature rows per update, as in the gradient-matching trainer
    rows_per_step = int(np.prod(dataset.state_shape)) // builder.n_outputs
    seg_batch = max(1, config.batch_size // (rows_per_step * segment_length))
    val_pairs = None
    if val_dataset is not None and len(val_dataset):
        n_val = val_dataset.n_points
        val_pairs = np.array([(i, s) for i in range(len(val_dataset)) for s in range(0, n_val - segment_length, segment_length)])
    skipped = 0
    t_start = time.perf_counter()
    for epoch in range(config.epochs):
        pairs = _segment_starts(len(dataset), dataset.n_points, segment_length, rng)
        total, count = 0.0, 0
        for b in range(0, len(pairs), seg_batch):
            chunk = pairs[b:b + seg_batch]
            try:
                loss, grads = euler_segment_loss(model, builder, dataset, chunk, segment_length)
            except NumericalError:
                skipped += len(chunk)
                continue
            adam_step(model, grads, adam)
            total += loss * len(chunk)
            count += len(chunk)
        train_loss = total / count if count else float("nan")
        val_loss = float("nan")
        if val_pairs is not None:
            try:
                val_loss, _ = euler_segment_loss(model, builder, val_dataset, val_pairs, segment_length, with_grad=False)
            except NumericalError:
                val_loss = math.inf
        history.append(
            {
                "epoch": len(history) + 1,
                "round": 0,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "wall_time_s": time.perf_counter() - t_start,
            }
        )
    return model, history, skipped
