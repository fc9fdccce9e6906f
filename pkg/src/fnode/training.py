"""Simulation-free training on Fourier-estimated gradient flows.

The trainer regresses the network output onto temporal-derivative targets
estimated from the observed series, so no ODE solver runs inside the
optimisation loop.  :func:`train_with_augmentation` alternates training with
densifying the data set using the model's own midpoint predictions, which
raises the usable cutoff frequency on the next round.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DivergenceError,
    InvalidInputError,
    NumericalError,
    NyquistError,
    ShapeError,
    UnsupportedSamplingError,
)
from .integrate import IntegratorConfig, integrate, model_vector_field
from .nn import AdamState, MlpModel, adam_step, loss_and_grad, mlp_forward, mlp_init, residual_loss
from .spectral import (
    Grid1D,
    Grid2D,
    SpectralPlan,
    ns_stream_features,
    spatial_derivative_1d,
    spatial_derivative_2d,
    temporal_derivative,
)
from .systems import SystemKind, SystemSpec, TimeSeriesDataset, rhs_lorenz63, rhs_parametric2d

logger = logging.getLogger(__name__)

BOUNDARY_MODES = ("detrend", "periodic")


class AugmentationWarning(UserWarning):
    pass


# -- features -----------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    """Which quantities are fed to the network, in order.

    Order is: state, control, spatial derivatives in ``spatial_orders``
    order, then the two stream-function features when ``ns_prior_features``.
    For 1-D PDEs only ``q == 0`` entries are meaningful.
    """

    includes_control: bool = True
    spatial_orders: tuple[tuple[int, int], ...] = ()
    ns_prior_features: bool = False

    def __post_init__(self):
        orders = tuple((int(p), int(q)) for p, q in self.spatial_orders)
        object.__setattr__(self, "spatial_orders", orders)
        for p, q in orders:
            if p < 0 or q < 0 or not 1 <= p + q <= 4:
                raise InvalidInputError(f"spatial order ({p}, {q}) must have total order 1..4")

    @classmethod
    def for_system(cls, system: SystemSpec) -> "FeatureSpec":
        if not system.kind.is_pde:
            return cls()
        if system.kind == SystemKind.NS:
            return cls(True, ((1, 0), (0, 1), (2, 0), (0, 2)), True)
        return cls(True, ((1, 0), (2, 0), (3, 0), (4, 0)), False)

    def validate_for(self, system: SystemSpec) -> None:
        if system.kind.is_pde:
            if (1, 0) not in self.spatial_orders:
                raise InvalidInputError("PDE feature specs must include the (1, 0) derivative")
            if system.kind != SystemKind.NS and (any(q for _, q in self.spatial_orders) or self.ns_prior_features):
                raise InvalidInputError("1-D PDEs only support x-derivatives and no stream features")
        elif self.spatial_orders or self.ns_prior_features:
            raise InvalidInputError("ODE feature specs cannot list spatial derivatives")

    def n_inputs(self, system: SystemSpec) -> int:
        if system.kind.is_pde:
            return 1 + int(self.includes_control) + len(self.spatial_orders) + 2 * int(self.ns_prior_features)
        return system.state_shape[0] + (system.control_shape[0] if self.includes_control else 0)

    def to_dict(self) -> dict:
        return {
            "includes_control": self.includes_control,
            "spatial_orders": [list(o) for o in self.spatial_orders],
            "ns_prior_features": self.ns_prior_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(bool(d["includes_control"]), tuple(tuple(o) for o in d["spatial_orders"]), bool(d["ns_prior_features"]))


def assemble_features(state, control, spatial_gradients, spec: FeatureSpec, priors=()) -> np.ndarray:
    """Concatenate one point's inputs in the canonical order."""
    parts = [np.atleast_1d(np.asarray(state, dtype=float))]
    if spec.includes_control:
        parts.append(np.atleast_1d(np.asarray(control, dtype=float)))
    grads = [np.atleast_1d(np.asarray(g, dtype=float)) for g in spatial_gradients]
    if len(grads) != len(spec.spatial_orders):
        raise ShapeError(f"expected {len(spec.spatial_orders)} spatial gradients, got {len(grads)}")
    parts.extend(grads)
    priors = [np.atleast_1d(np.asarray(p, dtype=float)) for p in priors]
    if len(priors) != 2 * int(spec.ns_prior_features):
        raise ShapeError("stream-function features must be given iff ns_prior_features is set")
    parts.extend(priors)
    return np.concatenate(parts)


class FeatureBuilder:
    """Vectorised feature map from states and controls to network inputs.

    ODE states ``(..., d)`` map to ``(..., n_inputs)``; PDE states
    ``(..., nx[, ny])`` map to one row per grid point,
    ``(..., nx[, ny], n_inputs)``.
    """

    def __init__(self, system: SystemSpec, spec: FeatureSpec, grid=None):
        spec.validate_for(system)
        self.system = system
        self.spec = spec
        self.grid = system.grid if grid is None else grid
        self.n_inputs = spec.n_inputs(system)
        self.n_outputs = 1 if system.kind.is_pde else system.state_shape[0]

    def with_grid(self, grid) -> "FeatureBuilder":
        return FeatureBuilder(self.system.with_grid(grid), self.spec, grid)

    def _derivative(self, s, p, q):
        if isinstance(self.grid, Grid2D):
            return spatial_derivative_2d(s, self.grid, p, q)
        return spatial_derivative_1d(s, self.grid.lx, p, self.grid.cutoff)

    def __call__(self, states, controls) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        u = np.asarray(controls, dtype=float)
        if not self.system.kind.is_pde:
            parts = [s, u] if self.spec.includes_control else [s]
            return np.concatenate(parts, axis=-1)
        cols = [s]
        if self.spec.includes_control:
            cols.append(np.broadcast_to(u, s.shape))
        cols.extend(self._derivative(s, p, q) for p, q in self.spec.spatial_orders)
        if self.spec.ns_prior_features:
            cols.extend(ns_stream_features(s, self.grid))
        return np.stack(cols, axis=-1)

    def adjoint(self, grad_features: np.ndarray) -> np.ndarray:
        """Pull a gradient on the features back to the state (transpose of the state part)."""
        g = np.asarray(grad_features, dtype=float)
        if not self.system.kind.is_pde:
            return g[..., : self.system.state_shape[0]].copy()
        out = g[..., 0].copy()
        col = 1 + int(self.spec.includes_control)
        for p, q in self.spec.spatial_orders:
            # the real Fourier multiplier (i k)^n is (-1)^n-symmetric
            out += (-1) ** (p + q) * self._derivative(g[..., col], p, q)
            col += 1
        if self.spec.ns_prior_features:
            vx, _ = ns_stream_features(g[..., col], self.grid)
            _, vy = ns_stream_features(g[..., col + 1], self.grid)
            out -= vx + vy
        return out


class OracleModel:
    """Ground-truth vector field expressed on the feature rows.

    Useful as a perfect "model" for consistency checks of rollout,
    augmentation and evaluation.
    """

    def __init__(self, system: SystemSpec, spec: FeatureSpec):
        self.system = system
        self.spec = spec
        self.n_outputs = 1 if system.kind.is_pde else system.state_shape[0]
        self._col = {}
        col = 1 + int(spec.includes_control)
        for o in spec.spatial_orders:
            self._col[o] = col
            col += 1
        self._prior = col if spec.ns_prior_features else None
        if not spec.includes_control:
            raise InvalidInputError("the oracle needs the control among its inputs")
        need = {
            SystemKind.KDV: [(1, 0), (3, 0)],
            SystemKind.DR: [(2, 0)],
            SystemKind.KS: [(1, 0), (2, 0), (4, 0)],
            SystemKind.NS: [(1, 0), (0, 1), (2, 0), (0, 2)],
        }.get(system.kind, [])
        missing = [o for o in need if o not in self._col]
        if missing or (system.kind == SystemKind.NS and self._prior is None):
            raise InvalidInputError(f"feature spec lacks terms needed by the {system.kind.value} oracle")

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        kind = self.system.kind
        c = self.system.coefficients
        if kind == SystemKind.PARAMETRIC2D:
            return rhs_parametric2d(x[:, :2], x[:, 2:4])
        if kind == SystemKind.LORENZ63:
            return rhs_lorenz63(x[:, :3], x[:, 3], c.get("sigma", 10.0), c.get("beta", 8.0 / 3.0))
        s, u = x[:, 0], x[:, 1]
        d = {o: x[:, i] for o, i in self._col.items()}
        if kind == SystemKind.KDV:
            out = d[(3, 0)] + u * s * d[(1, 0)]
        elif kind == SystemKind.DR:
            out = c.get("diffusivity", 0.01) * d[(2, 0)] + c.get("reaction", 0.01) * s**2 + u
        elif kind == SystemKind.KS:
            out = -s * d[(1, 0)] - d[(2, 0)] - u * d[(4, 0)]
        else:
            gx, gy = x[:, self._prior], x[:, self._prior + 1]
            lap = d[(2, 0)] + d[(0, 2)]
            out = gx * d[(0, 1)] - gy * d[(1, 0)] + c.get("viscosity", 0.001) * lap + u
        return out[:, None]

    __call__ = forward


# -- targets ------------------------------------------------------------------


def _bernoulli_basis(tau: np.ndarray, n: int) -> np.ndarray:
    """``B_n(tau) / n!`` for n = 0..4; each is the antiderivative of the previous."""
    if n == 0:
        return np.ones_like(tau)
    if n == 1:
        return tau - 0.5
    if n == 2:
        return (tau**2 - tau + 1.0 / 6.0) / 2.0
    if n == 3:
        return (tau**3 - 1.5 * tau**2 + 0.5 * tau) / 6.0
    if n == 4:
        return (tau**4 - 2.0 * tau**3 + tau**2 - 1.0 / 30.0) / 24.0
    raise InvalidInputError("boundary correction supports at most 4 matched derivatives")


def _endpoint_jumps(series: np.ndarray, n_jumps: int, n_fit: int, degree: int) -> np.ndarray:
    """Mismatch of value and derivatives across the periodic seam, in units of the period.

    Low-degree least-squares fits over the first and last ``n_fit`` samples
    give the values/derivatives at the start and one step past the end.
    """
    n = series.shape[0]
    x_left = np.arange(n_fit, dtype=float)
    x_right = np.arange(-n_fit + 1, 1, dtype=float)
    flat = series.reshape(n, -1)
    coef_l = np.polynomial.polynomial.polyfit(x_left, flat[:n_fit], degree)
    coef_r = np.polynomial.polynomial.polyfit(x_right, flat[n - n_fit:], degree)
    jumps = []
    for j in range(n_jumps):
        dl = np.polynomial.polynomial.polyder(coef_l, j) if j else coef_l
        dr = np.polynomial.polynomial.polyder(coef_r, j) if j else coef_r
        at_start = np.polynomial.polynomial.polyval(0.0, dl)
        past_end = np.polynomial.polynomial.polyval(1.0, dr)
        jumps.append((past_end - at_start) * float(n) ** j)
    return np.stack(jumps).reshape((n_jumps,) + series.shape[1:])


def estimate_derivative(
    series,
    dt: float,
    cutoff: int,
    boundary: str = "detrend",
    n_jumps: int = 3,
    n_fit: int = 10,
    fit_degree: int = 4,
) -> np.ndarray:
    """Fourier estimate of ``ds/dt`` along axis 0 of a uniformly sampled series.

    With ``boundary="periodic"`` this is exactly :func:`temporal_derivative`
    over the period ``N*dt``.  ``"detrend"`` first removes a polynomial that
    carries the mismatch of the first ``n_jumps`` derivatives across the
    periodic seam, differentiates the now smoothly periodic remainder
    spectrally and adds the polynomial's exact derivative back.
    """
    s = np.asarray(series, dtype=float)
    n = s.shape[0]
    plan = SpectralPlan(n, n * dt, cutoff)
    if boundary == "periodic":
        return temporal_derivative(s, plan)
    if boundary != "detrend":
        raise InvalidInputError(f"unknown boundary mode {boundary!r}")
    n_fit = min(n_fit, n)
    degree = min(fit_degree, n_fit - 1)
    jumps = _endpoint_jumps(s, n_jumps, n_fit, degree)
    tau = np.arange(n, dtype=float) / n
    shape = (n,) + (1,) * (s.ndim - 1)
    poly = sum(jumps[j] * _bernoulli_basis(tau, j + 1).reshape(shape) for j in range(n_jumps))
    slope = sum(jumps[j] * _bernoulli_basis(tau, j).reshape(shape) for j in range(n_jumps))
    return temporal_derivative(s - poly, plan) + slope / (n * dt)


def build_targets(dataset: TimeSeriesDataset, cutoff: int, boundary: str = "detrend") -> np.ndarray:
    """Temporal-gradient targets for every sample, shaped like ``dataset.states``."""
    if not dataset.uniform:
        raise UnsupportedSamplingError("target estimation needs uniformly sampled trajectories")
    n = dataset.n_points
    if cutoff > n // 2:
        raise NyquistError(f"cutoff {cutoff} exceeds N/2 = {n // 2}")
    steps = np.diff(dataset.times, axis=1)
    out = np.empty_like(dataset.states)
    for i in range(len(dataset)):
        dt = float(np.mean(steps[i]))
        out[i] = estimate_derivative(dataset.states[i], dt, cutoff, boundary)
    return out


def seam_mask(n_points: int, fraction: float = 0.05) -> np.ndarray:
    """Boolean mask over time indices excluding ``fraction`` of points at each end."""
    drop = int(math.ceil(fraction * n_points)) if fraction > 0 else 0
    mask = np.ones(n_points, dtype=bool)
    if drop:
        mask[:drop] = False
        mask[-drop:] = False
    return mask


def flow_matching_loss(model, features, targets, loss_form: str = "mean_squared") -> float:
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    forward = model.forward if hasattr(model, "forward") else model
    pred = np.asarray(forward(x))
    if pred.shape != y.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {y.shape}")
    return residual_loss(y - pred, loss_form)[0]


# -- training -----------------------------------------------------------------


@dataclass
class TrainConfig:
    cutoff: int = 300
    epochs: int = 2000
    batch_size: int = 1024
    lr: float = 1e-3
    weight_decay: float = 1e-5
    loss_form: str = "mean_squared"
    augmentation_rounds: int = 0
    validation_threshold: float | None = None
    seed: int = 0
    hidden_width: int = 128
    hidden_layers: int = 3
    activation: str = "tanh"
    seam_fraction: float = 0.05
    boundary: str = "detrend"
    val_fraction: float = 30 / 130
    pilot_epochs: int = 200

    def __post_init__(self):
        if self.cutoff < 1 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("cutoff, epochs and batch_size must be positive")
        if self.augmentation_rounds < 0:
            raise InvalidInputError("augmentation_rounds must be >= 0")
        if self.loss_form not in ("mean_squared", "mean_norm"):
            raise InvalidInputError(f"unknown loss form {self.loss_form!r}")
        if self.boundary not in BOUNDARY_MODES:
            raise InvalidInputError(f"unknown boundary mode {self.boundary!r}")


def init_model(builder: FeatureBuilder, config: TrainConfig) -> MlpModel:
    sizes = [builder.n_inputs] + [config.hidden_width] * config.hidden_layers + [builder.n_outputs]
    return mlp_init(sizes, config.seed, config.activation)


def training_rows(dataset: TimeSeriesDataset, builder: FeatureBuilder, targets: np.ndarray, mask=None):
    """Flatten features and targets to ``(rows, n_inputs)`` / ``(rows, n_outputs)``."""
    if mask is not None:
        states = dataset.states[:, mask]
        controls = dataset.controls[:, mask]
        targets = targets[:, mask]
    else:
        states, controls = dataset.states, dataset.controls
    x = builder(states, controls)
    return x.reshape(-1, builder.n_inputs), targets.reshape(-1, builder.n_outputs)


def split_dataset(dataset: TimeSeriesDataset, val_fraction: float, seed: int):
    n = len(dataset)
    n_val = max(1, int(round(val_fraction * n))) if n > 1 else 0
    order = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(order[n_val:])), dataset.subset(np.sort(order[:n_val]))


def _fit(model, x, y, xv, yv, config: TrainConfig, epochs: int, rng, history, epoch0, round_index, t_start):
    state = AdamState.for_model(model, config.lr, config.weight_decay)
    n = x.shape[0]
    bs = min(config.batch_size, n)
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            loss, grads = loss_and_grad(model, x[idx], y[idx], config.loss_form)
            if not math.isfinite(loss):
                raise NumericalError(f"training loss became non-finite in epoch {epoch0 + epoch + 1}")
            adam_step(model, grads, state)
            total += loss * idx.size
        train_loss = total / n
        val_loss = flow_matching_loss(model, xv, yv, config.loss_form) if xv is not None else float("nan")
        if not math.isfinite(train_loss) or (xv is not None and not math.isfinite(val_loss)):
            raise NumericalError(f"loss became non-finite in epoch {epoch0 + epoch + 1}")
        history.append(
            {
                "epoch": epoch0 + epoch + 1,
                "round": round_index,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "wall_time_s": time.perf_counter() - t_start,
            }
        )
    return model


def prepare_rows(dataset, builder, config: TrainConfig, cutoff: int, targets=None):
    if targets is None:
        targets = build_targets(dataset, cutoff, config.boundary)
    mask = seam_mask(dataset.n_points, config.seam_fraction)
    return training_rows(dataset, builder, targets, mask)


def train(
    model: MlpModel,
    dataset: TimeSeriesDataset,
    feature_spec: FeatureSpec,
    config: TrainConfig,
    val_dataset: TimeSeriesDataset | None = None,
    targets=None,
    val_targets=None,
    epochs: int | None = None,
    round_index: int = 0,
    history: list | None = None,
):
    """Mini-batch AdamW on the gradient-matching loss.

    Targets are estimated once (unless given).  Without ``val_dataset`` a
    fraction ``config.val_fraction`` of the samples is held out.  Returns
    ``(model, history)`` with one history row per epoch.
    """
    builder = FeatureBuilder(dataset.system, feature_spec)
    if val_dataset is None and targets is None:
        dataset, val_dataset = split_dataset(dataset, config.val_fraction, config.seed)
    history = [] if history is None else history
    t_start = time.perf_counter()
    x, y = prepare_rows(dataset, builder, config, config.cutoff, targets)
    xv = yv = None
    if val_dataset is not None and len(val_dataset):
        k_val = min(config.cutoff, val_dataset.n_points // 2)
        xv, yv = prepare_rows(val_dataset, builder, config, k_val, val_targets)
    if model is None:
        model = init_model(builder, config)
    if model.n_inputs != builder.n_inputs or model.n_outputs != builder.n_outputs:
        raise ShapeError(f"model maps {model.n_inputs}->{model.n_outputs}, features need {builder.n_inputs}->{builder.n_outputs}")
    if round_index == 0 and np.all(model.input_std == 1.0) and np.all(model.input_mean == 0.0):
        model.set_normalization(x.mean(axis=0), x.std(axis=0))
    rng = np.random.default_rng([config.seed, round_index])
    epoch0 = history[-1]["epoch"] if history else 0
    _fit(model, x, y, xv, yv, config, epochs or config.epochs, rng, history, epoch0, round_index, t_start)
    return model, history


def augment_dataset(
    model,
    dataset: TimeSeriesDataset,
    integrator_config: IntegratorConfig | None = None,
    feature_spec: FeatureSpec | None = None,
    midpoint: str = "two_sided",
):
    """Insert model predictions at every interval midpoint (``N -> 2N - 1``).

    ``midpoint="forward"`` integrates the model over half a step from the
    observed state at the left end of each interval.  ``"two_sided"`` (the
    default) averages that with a half step backwards in time from the
    right end, which cancels the first-order effect of a bias in the
    learned vector field.  Controls are linearly interpolated.  Predictions
    are plain data; nothing is differentiated.  On divergence the original
    data set is returned and an :class:`AugmentationWarning` is emitted.
    """
    if not dataset.uniform:
        raise UnsupportedSamplingError("augmentation needs uniform sampling")
    if midpoint not in ("forward", "two_sided"):
        raise InvalidInputError(f"unknown midpoint mode {midpoint!r}")
    spec = feature_spec or FeatureSpec.for_system(dataset.system)
    builder = FeatureBuilder(dataset.system, spec)
    s_count, n = dataset.times.shape
    dt = dataset.dt
    half = 0.5 * dt
    if integrator_config is None:
        integrator_config = IntegratorConfig("rk4", fixed_step=dt / 20.0)
    state_shape = dataset.state_shape
    control_shape = dataset.controls.shape[2:]
    u_left = dataset.controls[:, :-1].reshape((-1,) + control_shape)
    u_right = dataset.controls[:, 1:].reshape((-1,) + control_shape)
    du = u_right - u_left
    vf = model_vector_field(model, builder)

    def forward_rhs(s, tau):
        return vf(s, u_left + (tau / dt) * du)

    def backward_rhs(s, sigma):
        return -vf(s, u_right - (sigma / dt) * du)

    try:
        _, sol = integrate(forward_rhs, dataset.states[:, :-1].reshape((-1,) + state_shape), 0.0, half, integrator_config)
        mid = sol[-1]
        if midpoint == "two_sided":
            _, sol = integrate(backward_rhs, dataset.states[:, 1:].reshape((-1,) + state_shape), 0.0, half, integrator_config)
            mid = 0.5 * (mid + sol[-1])
    except (DivergenceError, NumericalError) as exc:
        warnings.warn(f"augmentation aborted: {exc}", AugmentationWarning, stacklevel=2)
        return dataset
    mid = mid.reshape((s_count, n - 1) + state_shape)
    if not np.all(np.isfinite(mid)):
        warnings.warn("augmentation aborted: non-finite midpoint prediction", AugmentationWarning, stacklevel=2)
        return dataset
    n_new = 2 * n - 1
    states = np.empty((s_count, n_new) + state_shape)
    states[:, 0::2] = dataset.states
    states[:, 1::2] = mid
    controls = np.empty((s_count, n_new) + dataset.controls.shape[2:])
    controls[:, 0::2] = dataset.controls
    controls[:, 1::2] = 0.5 * (dataset.controls[:, :-1] + dataset.controls[:, 1:])
    times = np.empty((s_count, n_new))
    times[:, 0::2] = dataset.times
    times[:, 1::2] = 0.5 * (dataset.times[:, :-1] + dataset.times[:, 1:])
    return TimeSeriesDataset(dataset.system, times, states, controls, dataset.initial_states.copy(), dataset.config_hash)


@dataclass
class TrainResult:
    model: MlpModel
    history: list
    rounds: list = field(default_factory=list)
    train_seconds: float = 0.0


def train_with_augmentation(
    dataset: TimeSeriesDataset,
    config: TrainConfig,
    feature_spec: FeatureSpec | None = None,
    val_dataset: TimeSeriesDataset | None = None,
    integrator_config: IntegratorConfig | None = None,
    model: MlpModel | None = None,
    on_round=None,
) -> TrainResult:
    """Train, then alternately densify the training data and retrain.

    Stops once the validation loss is at or below the threshold or the
    augmentation rounds are used up.  The cutoff doubles each round but
    never exceeds half the new number of points.  ``on_round``, if given,
    is called as ``on_round(info, model, dataset)`` after each round's
    training, with the data set that round was trained on.
    """
    t_start = time.perf_counter()
    spec = feature_spec or FeatureSpec.for_system(dataset.system)
    builder = FeatureBuilder(dataset.system, spec)
    if val_dataset is None:
        dataset, val_dataset = split_dataset(dataset, config.val_fraction, config.seed)
    if config.cutoff > dataset.n_points // 2:
        raise NyquistError(f"cutoff {config.cutoff} exceeds N/2 = {dataset.n_points // 2}")
    if model is None:
        model = init_model(builder, config)
    threshold = config.validation_threshold
    if threshold is None and config.augmentation_rounds > 0:
        pilot, pilot_hist = train(model.copy(), dataset, spec, config, val_dataset, epochs=config.pilot_epochs)
        threshold = 1.05 * min(r["val_loss"] for r in pilot_hist)
        logger.info("validation threshold from pilot run: %.4g", threshold)
    history: list = []
    rounds = []
    cutoff = config.cutoff
    current = dataset
    for r in range(config.augmentation_rounds + 1):
        round_cfg = replace(config, cutoff=cutoff)
        model, history = train(model, current, spec, round_cfg, val_dataset, round_index=r, history=history)
        val_loss = history[-1]["val_loss"]
        rounds.append({"round": r, "n_points": current.n_points, "cutoff": cutoff, "val_loss": val_loss})
        if on_round is not None:
            on_round(rounds[-1], model, current)
        if r == config.augmentation_rounds or (threshold is not None and val_loss <= threshold):
            break
        augmented = augment_dataset(model, current, integrator_config, spec)
        if augmented is current:
            break
        current = augmented
        cutoff = min(2 * cutoff, current.n_points // 2)
    return TrainResult(model, history, rounds, time.perf_counter() - t_start)
