"""Benchmark dynamical systems and ground-truth dataset generation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import grf as grf_mod
from .accel import kernels
from .errors import DivergenceError, InvalidInputError, ShapeError
from .grf import GrfConfig
from .spectral import (
    Grid1D,
    Grid2D,
    ns_stream_features,
    spatial_derivative_1d,
    spatial_derivative_2d,
    uniform_spacing,
)

PARAMETRIC2D_MATRIX = np.array([[-0.1, 2.0], [-2.0, -0.1]])
LORENZ_SIGMA = 10.0
LORENZ_BETA = 8.0 / 3.0

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


class SystemKind(str, Enum):
    PARAMETRIC2D = "parametric2d"
    LORENZ63 = "lorenz63"
    KDV = "kdv"
    DR = "dr"
    KS = "ks"
    NS = "ns"

    @property
    def is_pde(self) -> bool:
        return self in (SystemKind.KDV, SystemKind.DR, SystemKind.KS, SystemKind.NS)


@dataclass(frozen=True)
class SystemSpec:
    """Identity, domain and coefficients of a benchmark system.

    ``control`` drives the time-dependent part of the forcing (``u(t)`` for
    the 2-D ODE, ``rho(t)`` for Lorenz63, ``u_1(t)`` for the PDEs).
    ``field_grf`` is used for the NS spatial forcing ``u_0(x, y)`` and the
    NS initial vorticity.
    """

    kind: SystemKind
    time_horizon: float
    grid: Grid1D | Grid2D | None = None
    coefficients: dict = field(default_factory=dict)
    control: GrfConfig = GrfConfig()
    field_grf: GrfConfig | None = None
    init_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind(self.kind))
        if not self.time_horizon > 0:
            raise InvalidInputError("time_horizon must be positive")
        if self.kind.is_pde != (self.grid is not None):
            raise InvalidInputError(f"{self.kind.value}: grid must be given iff the system is a PDE")
        if self.kind == SystemKind.NS and not isinstance(self.grid, Grid2D):
            raise InvalidInputError("ns needs a Grid2D")
        if self.kind in (SystemKind.KDV, SystemKind.DR, SystemKind.KS) and not isinstance(self.grid, Grid1D):
            raise InvalidInputError(f"{self.kind.value} needs a Grid1D")

    @property
    def state_shape(self) -> tuple[int, ...]:
        if self.kind == SystemKind.PARAMETRIC2D:
            return (2,)
        if self.kind == SystemKind.LORENZ63:
            return (3,)
        if isinstance(self.grid, Grid2D):
            return self.grid.shape
        return (self.grid.nx,)

    @property
    def control_shape(self) -> tuple[int, ...]:
        if self.kind == SystemKind.PARAMETRIC2D:
            return (2,)
        if self.kind == SystemKind.LORENZ63:
            return (1,)
        return self.state_shape

    def with_grid(self, grid) -> "SystemSpec":
        return replace(self, grid=grid)


def default_system(kind, **overrides) -> SystemSpec:
    """Benchmark settings used throughout the experiments.

    Values not fixed by the benchmark description (ODE horizons, Lorenz
    forcing, NS initial field) are documented defaults.
    """
    kind = SystemKind(kind)
    if kind == SystemKind.PARAMETRIC2D:
        spec = SystemSpec(kind, 10.0, control=GrfConfig(0.0, 0.1, 20.0))
    elif kind == SystemKind.LORENZ63:
        spec = SystemSpec(
            kind,
            10.0,
            coefficients={"sigma": LORENZ_SIGMA, "beta": LORENZ_BETA},
            control=GrfConfig(28.0, 1.0, 2.0),
            init_scale=10.0,
        )
    elif kind == SystemKind.KDV:
        # with unit-scale forcing most trajectories blow up within the horizon
        spec = SystemSpec(kind, 20.0, Grid1D(64, 16 * math.pi), control=GrfConfig(0.0, 0.2, 0.5))
    elif kind == SystemKind.DR:
        spec = SystemSpec(
            kind,
            1.0,
            Grid1D(64, 1.0),
            coefficients={"diffusivity": 0.01, "reaction": 0.01},
            control=GrfConfig(0.0, 0.1, 1.0),
        )
    elif kind == SystemKind.KS:
        # u must stay positive or the fourth-order term is anti-diffusive
        spec = SystemSpec(kind, 20.0, Grid1D(64, 32 * math.pi), control=GrfConfig(2.0, 0.2, 0.25))
    else:
        spec = SystemSpec(
            kind,
            10.0,
            Grid2D(32, 32, 2.0, 2.0),
            coefficients={"viscosity": 0.001},
            control=GrfConfig(0.0, 0.1, 1.0),
            field_grf=GrfConfig(0.0, 0.2, 1.0, periods=(2.0, 2.0)),
        )
    return replace(spec, **overrides) if overrides else spec


# -- right-hand sides ---------------------------------------------------------


def rhs_parametric2d(s, u, matrix=PARAMETRIC2D_MATRIX) -> np.ndarray:
    """``A @ s**3 + u`` with the cube taken elementwise (batched on the last axis)."""
    s = np.asarray(s, dtype=float)
    return (s**3) @ np.asarray(matrix).T + np.asarray(u, dtype=float)


def rhs_lorenz63(s, rho, sigma=LORENZ_SIGMA, beta=LORENZ_BETA) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if rho.ndim and rho.shape[-1] == 1 and rho.ndim == s.ndim:
        rho = rho[..., 0]
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([sigma * (y - x), rho * x - y - x * z, x * y - beta * z], axis=-1)


def _dealias_1d(f: np.ndarray) -> np.ndarray:
    n = f.shape[-1]
    spec = np.fft.rfft(f, axis=-1)
    spec[..., n // 3 + 1:] = 0.0
    return np.fft.irfft(spec, n=n, axis=-1)


def _dealias_2d(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    mask = Grid2D(grid.nx, grid.ny, grid.lx, grid.ly, grid.nx // 3, grid.ny // 3).mask(0, 0)
    return np.fft.ifft2(mask * np.fft.fft2(f, axes=(-2, -1)), axes=(-2, -1)).real


def rhs_pde(kind, field, u_field, grid, coefficients=None, dealias: bool = False) -> np.ndarray:
    """Time derivative of a PDE state; leading axes are treated as a batch.

    With ``dealias`` the quadratic terms of KDV, KS and NS are truncated to
    the lowest two thirds of the modes (used by the data generator, where
    undamped aliased modes otherwise grow without bound).
    """
    kind = SystemKind(kind)
    coefficients = coefficients or {}
    s = np.asarray(field, dtype=float)
    u = np.asarray(u_field, dtype=float)
    if s.shape != u.shape:
        raise ShapeError(f"state shape {s.shape} != control shape {u.shape}")
    if kind == SystemKind.NS:
        if s.shape[-2:] != grid.shape:
            raise ShapeError(f"state shape {s.shape} does not match grid {grid.shape}")
        nu = coefficients.get("viscosity", 0.001)
        gx, gy = ns_stream_features(s, grid)
        sx = spatial_derivative_2d(s, grid, 1, 0)
        sy = spatial_derivative_2d(s, grid, 0, 1)
        lap = spatial_derivative_2d(s, grid, 2, 0) + spatial_derivative_2d(s, grid, 0, 2)
        adv = gx * sy - gy * sx
        if dealias:
            adv = _dealias_2d(adv, grid)
        return adv + nu * lap + u
    if s.shape[-1] != grid.nx:
        raise ShapeError(f"state has {s.shape[-1]} points, grid has {grid.nx}")

    def d(f, p):
        return spatial_derivative_1d(f, grid.lx, p)

    half_sq = 0.5 * s**2
    if dealias and kind != SystemKind.DR:
        half_sq = _dealias_1d(half_sq)
    if kind == SystemKind.KDV:
        return d(s, 3) + u * d(half_sq, 1)
    if kind == SystemKind.DR:
        return coefficients.get("diffusivity", 0.01) * d(s, 2) + coefficients.get("reaction", 0.01) * s**2 + u
    if kind == SystemKind.KS:
        return -d(half_sq, 1) - d(s, 2) - u * d(s, 4)
    raise InvalidInputError(f"{kind.value} is not a PDE")


def true_rhs(spec: SystemSpec, states, controls, dealias: bool = False) -> np.ndarray:
    """Ground-truth vector field for arrays shaped ``(..., *state_shape)``."""
    if spec.kind == SystemKind.PARAMETRIC2D:
        return rhs_parametric2d(states, controls)
    if spec.kind == SystemKind.LORENZ63:
        c = spec.coefficients
        return rhs_lorenz63(states, controls, c.get("sigma", LORENZ_SIGMA), c.get("beta", LORENZ_BETA))
    return rhs_pde(spec.kind, states, controls, spec.grid, spec.coefficients, dealias)


# -- datasets -----------------------------------------------------------------


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    initial_state: np.ndarray


@dataclass
class TimeSeriesDataset:
    """Trajectories sharing one time grid length and state/control shapes.

    Arrays are stacked: ``times`` is ``(S, N)``, ``states`` is
    ``(S, N, *state_shape)`` and ``controls`` is ``(S, N, *control_shape)``.
    """

    system: SystemSpec
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    initial_states: np.ndarray
    config_hash: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        self.initial_states = np.asarray(self.initial_states, dtype=float)
        s, n = self.times.shape
        if self.states.shape[:2] != (s, n) or self.controls.shape[:2] != (s, n):
            raise ShapeError("states/controls do not match the (samples, points) of times")
        if self.initial_states.shape != (s,) + self.states.shape[2:]:
            raise ShapeError("initial_states shape mismatch")
        if np.any(np.diff(self.times, axis=1) <= 0):
            raise InvalidInputError("times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.shape[0]

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(self.times[i], self.states[i], self.controls[i], self.initial_states[i])

    @property
    def n_points(self) -> int:
        return self.times.shape[1]

    @property
    def state_shape(self) -> tuple[int, ...]:
        return self.states.shape[2:]

    @property
    def uniform(self) -> bool:
        steps = np.diff(self.times, axis=1)
        return bool(np.max(np.abs(steps - steps[:, :1])) < 1e-9)

    @property
    def dt(self) -> float:
        return uniform_spacing(self.times[0])

    def subset(self, index) -> "TimeSeriesDataset":
        index = np.atleast_1d(index)
        if index.size == 0:
            index = index.astype(np.int64)
        return TimeSeriesDataset(
            self.system,
            self.times[index],
            self.states[index],
            self.controls[index],
            self.initial_states[index],
            self.config_hash,
        )


def sample_seed(seed: int, split: str, index: int, stream: int = 0) -> np.random.SeedSequence:
    """Per-sample seed; independent of how many samples are generated or in what order."""
    return np.random.SeedSequence([int(seed), SPLIT_CODES.get(split, 3), int(index), stream])


def _initial_state(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    kind = spec.kind
    if kind in (SystemKind.PARAMETRIC2D, SystemKind.LORENZ63):
        return spec.init_scale * rng.uniform(-1.0, 1.0, size=spec.state_shape)
    if kind == SystemKind.NS:
        g = spec.grid
        pts = np.stack(np.meshgrid(g.x, g.y, indexing="ij"), axis=-1).reshape(-1, 2)
        cfg = replace(spec.field_grf, periods=(g.lx, g.ly))
        return spec.init_scale * _sampler(pts, cfg)(rng).reshape(g.shape)
    x = spec.grid.x
    phase = 2.0 * np.pi * x / spec.grid.lx
    if kind == SystemKind.DR:
        return np.cos(phase)
    return 2.0 * np.cos(phase) * (1.0 + np.sin(phase))


_SAMPLER_CACHE: dict = {}


def _sampler(points: np.ndarray, cfg: GrfConfig):
    key = (points.shape, points.tobytes(), cfg)
    chol = _SAMPLER_CACHE.get(key)
    if chol is None:
        cov = grf_mod.grf_covariance(points, cfg.length_scale, cfg.periods)
        chol = grf_mod.cholesky_factor(cov, cfg.jitter)
        if len(_SAMPLER_CACHE) > 16:
            _SAMPLER_CACHE.clear()
        _SAMPLER_CACHE[key] = chol

    def draw(rng, size=None):
        z = rng.standard_normal(chol.shape[0] if size is None else (size, chol.shape[0]))
        return cfg.mean + cfg.scale * (z @ chol.T)

    return draw


def sample_controls(spec: SystemSpec, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Control series ``(N, *control_shape)`` for one sample.

    ODE controls draw each component independently from the temporal GRF.
    PDE controls are ``g(x) + u1(t)`` (``u0(x, y) + u1(t)`` for NS), stored
    as full fields.
    """
    n = times.size
    draw = _sampler(times.reshape(-1, 1), spec.control)
    if not spec.kind.is_pde:
        m = spec.control_shape[0]
        return np.ascontiguousarray(draw(rng, size=m).T)
    u1 = draw(rng)
    if spec.kind == SystemKind.NS:
        g = spec.grid
        pts = np.stack(np.meshgrid(g.x, g.y, indexing="ij"), axis=-1).reshape(-1, 2)
        cfg = replace(spec.field_grf, periods=(g.lx, g.ly))
        u0 = _sampler(pts, cfg)(rng).reshape(g.shape)
        return u0[None, :, :] + u1[:, None, None]
    x = spec.grid.x
    shape = np.sin(2.0 * np.pi * x / spec.grid.lx)
    return shape[None, :] + u1[:, None]


def _pde_stable_step(spec: SystemSpec, states: np.ndarray, controls: np.ndarray) -> float:
    g = spec.grid
    smax = float(np.max(np.abs(states))) + 1e-12
    umax = float(np.max(np.abs(controls))) + 1e-12
    if spec.kind == SystemKind.NS:
        kmax = max(np.max(np.abs(g.kx)), np.max(np.abs(g.ky)))
        gx, gy = ns_stream_features(states, g)
        vmax = float(np.max(np.hypot(gx, gy))) + smax
        lam = spec.coefficients.get("viscosity", 0.001) * 2 * kmax**2 + 2.0 * vmax * kmax
    else:
        kmax = float(np.max(np.abs(g.kx)))
        if spec.kind == SystemKind.KDV:
            lam = kmax**3 + umax * smax * kmax
        elif spec.kind == SystemKind.DR:
            lam = spec.coefficients.get("diffusivity", 0.01) * kmax**2 + 0.02 * smax
        else:
            lam = umax * kmax**4 + kmax**2 + smax * kmax
    # RK4 stability reaches ~2.8 on the imaginary axis; keep a 2x margin for growth
    return 1.4 / lam


def _integrate_pde(spec, s0, times, controls, substeps):
    s = np.array(s0, dtype=float)
    n = times.size
    out = np.empty((s.shape[0], n) + s.shape[1:])
    out[:, 0] = s
    for i in range(n - 1):
        u0 = controls[:, i]
        du = controls[:, i + 1] - u0
        h = (times[i + 1] - times[i]) / substeps
        for j in range(substeps):
            ua = u0 + (j / substeps) * du
            um = u0 + ((j + 0.5) / substeps) * du
            ub = u0 + ((j + 1.0) / substeps) * du
            k1 = true_rhs(spec, s, ua, True)
            k2 = true_rhs(spec, s + 0.5 * h * k1, um, True)
            k3 = true_rhs(spec, s + 0.5 * h * k2, um, True)
            k4 = true_rhs(spec, s + h * k3, ub, True)
            s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, i + 1] = s
        bad = ~np.isfinite(s.reshape(s.shape[0], -1)).all(axis=1)
        if bad.any():
            raise DivergenceError(
                f"sample {int(np.argmax(bad))} diverged before t={times[i + 1]:g}",
                sample=int(np.argmax(bad)),
                time=float(times[i]),
            )
    return out


# largest reference RK4 step for the ODE systems; keeps step-halving changes below 1e-6 relative
ODE_MAX_STEP = 5e-4


def reference_substeps(spec: SystemSpec, dt: float, initial_states, controls, minimum: int = 20) -> int:
    """Substeps per sample interval: at least ``minimum`` and within the accuracy or stability bound."""
    if not spec.kind.is_pde:
        return max(minimum, int(math.ceil(dt / ODE_MAX_STEP - 1e-9)))
    stable = _pde_stable_step(spec, np.asarray(initial_states), np.asarray(controls))
    return max(minimum, int(math.ceil(dt / stable)))


def integrate_reference(spec: SystemSpec, initial_states, times, controls, substeps: int) -> np.ndarray:
    """Fixed-step RK4 of the true system with piecewise-linear controls.

    ``initial_states`` is ``(S, *state_shape)`` and ``controls`` is
    ``(S, N, *control_shape)``; the result is ``(S, N, *state_shape)``.
    """
    times = np.asarray(times, dtype=float)
    s0 = np.asarray(initial_states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if spec.kind.is_pde:
        return _integrate_pde(spec, s0, times, controls, substeps)
    if spec.kind == SystemKind.PARAMETRIC2D:
        sid, params = kernels.PARAMETRIC2D, PARAMETRIC2D_MATRIX.ravel()
    else:
        c = spec.coefficients
        sid = kernels.LORENZ63
        params = np.array([c.get("sigma", LORENZ_SIGMA), c.get("beta", LORENZ_BETA)])
    out, failed = kernels.rk4_ode(sid, params, s0, times, controls, substeps)
    if failed >= 0:
        bad_t = ~np.isfinite(out[failed]).all(axis=1)
        first = int(np.argmax(bad_t))
        raise DivergenceError(
            f"sample {failed} diverged before t={times[first]:g}",
            sample=failed,
            time=float(times[max(first - 1, 0)]),
        )
    return out


def generate_dataset(
    spec: SystemSpec,
    n_samples: int,
    n_points: int,
    seed: int,
    noise_sd: float = 0.0,
    split: str = "train",
    grf: GrfConfig | None = None,
    initial_states=None,
    substeps: int | None = None,
    config_hash: str = "",
) -> TimeSeriesDataset:
    """Simulate ``n_samples`` trajectories on ``n_points`` uniform times in ``[0, horizon]``.

    Each sample's initial state, control and noise come from its own seed
    (see :func:`sample_seed`).  With ``noise_sd > 0`` zero-mean Gaussian
    noise of standard deviation ``noise_sd * mean(|clean states|)`` is
    added to the observed states; ``initial_states`` stays clean.
    """
    if n_points < 8:
        raise InvalidInputError(f"n_points must be >= 8, got {n_points}")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    if grf is not None:
        spec = replace(spec, control=grf)
    times = np.linspace(0.0, spec.time_horizon, n_points)
    rngs = [np.random.default_rng(sample_seed(seed, split, i)) for i in range(n_samples)]
    if initial_states is None:
        s0 = np.stack([_initial_state(spec, rng) for rng in rngs])
    else:
        s0 = np.broadcast_to(np.asarray(initial_states, dtype=float), (n_samples,) + spec.state_shape).copy()
    controls = np.stack([sample_controls(spec, times, rng) for rng in rngs])
    dt = times[1] - times[0]
    if substeps is None:
        substeps = reference_substeps(spec, dt, s0, controls)
    states = integrate_reference(spec, s0, times, controls, substeps)
    if noise_sd > 0:
        level = noise_sd * float(np.mean(np.abs(states)))
        noise = np.stack(
            [
                np.random.default_rng(sample_seed(seed, split, i, stream=1)).standard_normal(states.shape[1:])
                for i in range(n_samples)
            ]
        )
        states = states + level * noise
    return TimeSeriesDataset(spec, np.tile(times, (n_samples, 1)), states, controls, s0, config_hash)
