"""Fourier-analysis kernels.

Temporal and spatial derivatives are computed by multiplying DFT
coefficients with ``(i*omega)**p`` on a signed-frequency grid and zeroing
every mode with ``|k| > cutoff``.  For odd derivative orders on an even
number of points the Nyquist mode is zeroed as well, since its derivative
has no well-defined sign.

All functions are pure; plans and grids are frozen dataclasses whose
frequency arrays are read-only.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    InvalidInputError,
    NumericalError,
    NyquistError,
    ShapeError,
    UnsupportedOrderError,
)

MAX_SPATIAL_ORDER = 4
_IMAG_TOL = 1e-8


def signed_indices(n: int) -> np.ndarray:
    """Integer mode numbers ``0, 1, ..., ceil(n/2)-1, -floor(n/2), ..., -1``."""
    return np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _cutoff_mask(n: int, cutoff: int, order: int) -> np.ndarray:
    k = signed_indices(n)
    mask = np.abs(k) <= cutoff
    if order % 2 == 1 and n % 2 == 0:
        mask &= k != -(n // 2)
    return mask


@dataclass(frozen=True)
class SpectralPlan:
    """Frequencies and cutoff for a uniformly sampled periodic signal.

    Parameters
    ----------
    n_points : int
        Samples per period.
    period : float
        Length of the period (``n_points * dt`` for a time series).
    cutoff : int
        Highest retained mode number ``K``; must satisfy ``K <= n_points // 2``.
    """

    n_points: int
    period: float
    cutoff: int

    def __post_init__(self):
        if self.n_points < 2:
            raise InvalidInputError(f"n_points must be >= 2, got {self.n_points}")
        if not (np.isfinite(self.period) and self.period > 0):
            raise InvalidInputError(f"period must be positive, got {self.period}")
        if self.cutoff < 0:
            raise InvalidInputError(f"cutoff must be non-negative, got {self.cutoff}")
        if self.cutoff > self.n_points // 2:
            raise NyquistError(
                f"cutoff {self.cutoff} exceeds Nyquist bound {self.n_points // 2} "
                f"for {self.n_points} points"
            )

    @classmethod
    def for_series(cls, times: np.ndarray, cutoff: int) -> "SpectralPlan":
        times = np.asarray(times, dtype=float)
        dt = uniform_spacing(times)
        return cls(n_points=times.size, period=times.size * dt, cutoff=cutoff)

    @cached_property
    def signed_freqs(self) -> np.ndarray:
        return _frozen(2.0 * np.pi / self.period * signed_indices(self.n_points).astype(float))

    def mask(self, order: int = 1) -> np.ndarray:
        return _frozen(_cutoff_mask(self.n_points, self.cutoff, order))

    def multiplier(self, order: int = 1) -> np.ndarray:
        return _frozen(np.where(self.mask(order), (1j * self.signed_freqs) ** order, 0.0))


@dataclass(frozen=True)
class Grid1D:
    nx: int
    lx: float
    cutoff: int | None = None

    def __post_init__(self):
        if self.nx < 4:
            raise InvalidInputError(f"nx must be >= 4, got {self.nx}")
        if not self.lx > 0:
            raise InvalidInputError(f"lx must be positive, got {self.lx}")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", self.nx // 2)
        if not 0 <= self.cutoff <= self.nx // 2:
            raise NyquistError(f"cutoff {self.cutoff} outside [0, {self.nx // 2}]")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(np.arange(self.nx) * self.dx)

    @cached_property
    def kx(self) -> np.ndarray:
        return _frozen(2.0 * np.pi / self.lx * signed_indices(self.nx).astype(float))

    def with_nx(self, nx: int) -> "Grid1D":
        return Grid1D(nx, self.lx)


@dataclass(frozen=True)
class Grid2D:
    """Periodic ``nx`` by ``ny`` grid on ``[0, lx) x [0, ly)``.

    Cutoffs default to the full band.  Arrays on this grid are indexed
    ``field[jx, jy]``.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    cutoff_x: int | None = None
    cutoff_y: int | None = None

    def __post_init__(self):
        for name in ("nx", "ny"):
            if getattr(self, name) < 4:
                raise InvalidInputError(f"{name} must be >= 4")
        for name in ("lx", "ly"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.cutoff_x is None:
            object.__setattr__(self, "cutoff_x", self.nx // 2)
        if self.cutoff_y is None:
            object.__setattr__(self, "cutoff_y", self.ny // 2)
        if not 0 <= self.cutoff_x <= self.nx // 2 or not 0 <= self.cutoff_y <= self.ny // 2:
            raise NyquistError("cutoff exceeds Nyquist bound of the grid")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(np.arange(self.nx) * (self.lx / self.nx))

    @cached_property
    def y(self) -> np.ndarray:
        return _frozen(np.arange(self.ny) * (self.ly / self.ny))

    @cached_property
    def kx(self) -> np.ndarray:
        return _frozen(2.0 * np.pi / self.lx * signed_indices(self.nx).astype(float))

    @cached_property
    def ky(self) -> np.ndarray:
        return _frozen(2.0 * np.pi / self.ly * signed_indices(self.ny).astype(float))

    def mask(self, p: int = 0, q: int = 0) -> np.ndarray:
        mx = _cutoff_mask(self.nx, self.cutoff_x, p)
        my = _cutoff_mask(self.ny, self.cutoff_y, q)
        return mx[:, None] & my[None, :]

    def with_shape(self, nx: int, ny: int) -> "Grid2D":
        return Grid2D(nx, ny, self.lx, self.ly)


def uniform_spacing(times: np.ndarray, tol: float = 1e-9) -> float:
    """Return the common spacing of ``times`` or raise if it is not uniform."""
    from .errors import UnsupportedSamplingError

    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise InvalidInputError("need a 1-D array with at least two times")
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (times.size - 1)
    if np.any(steps <= 0):
        raise UnsupportedSamplingError("times must be strictly increasing")
    if np.max(np.abs(steps - dt)) > tol * max(1.0, abs(dt)):
        raise UnsupportedSamplingError("non-uniform sampling is not supported")
    return float(dt)


def _real_part(values: np.ndarray) -> np.ndarray:
    real = values.real
    scale = max(1.0, float(np.max(np.abs(real))) if real.size else 1.0)
    if values.size and np.max(np.abs(values.imag)) > _IMAG_TOL * scale:
        raise NumericalError(
            f"imaginary residue {np.max(np.abs(values.imag)):.3e} after inverse transform"
        )
    return np.ascontiguousarray(real)


def dft(series) -> np.ndarray:
    """Coefficients ``sum_n s_n exp(-2j*pi*n*k/N)`` for ``k = 0..N-1``."""
    s = np.asarray(series, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise InvalidInputError("dft needs a 1-D series with at least 2 samples")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("series contains non-finite values")
    return np.fft.fft(s)


def idft(spectrum) -> np.ndarray:
    """Inverse of :func:`dft`, including the ``1/N`` normalisation."""
    c = np.asarray(spectrum, dtype=complex)
    if c.ndim != 1 or c.size < 2:
        raise InvalidInputError("idft needs a 1-D spectrum with at least 2 entries")
    return np.fft.ifft(c)


def temporal_derivative(series, plan: SpectralPlan, order: int = 1, axis: int = 0) -> np.ndarray:
    """Truncated Fourier estimate of the time derivative of a sampled series.

    ``series`` may carry extra dimensions; the transform runs along ``axis``.
    """
    s = np.asarray(series, dtype=float)
    if s.shape[axis] != plan.n_points:
        raise ShapeError(
            f"series has {s.shape[axis]} samples along axis {axis}, plan expects {plan.n_points}"
        )
    shape = [1] * s.ndim
    shape[axis] = plan.n_points
    mult = plan.multiplier(order).reshape(shape)
    return _real_part(np.fft.ifft(mult * np.fft.fft(s, axis=axis), axis=axis))


def spatial_derivative_1d(field, length: float, order: int, cutoff: int | None = None) -> np.ndarray:
    """``d^order/dx^order`` of a periodic field sampled along its last axis."""
    f = np.asarray(field, dtype=float)
    if not 0 <= order <= MAX_SPATIAL_ORDER:
        raise UnsupportedOrderError(f"order {order} not in 0..{MAX_SPATIAL_ORDER}")
    n = f.shape[-1]
    if n < 4:
        raise ShapeError("field needs at least 4 points")
    plan = SpectralPlan(n, length, n // 2 if cutoff is None else cutoff)
    return _real_part(np.fft.ifft(plan.multiplier(order) * np.fft.fft(f, axis=-1), axis=-1))


def _multiplier_2d(grid: Grid2D, p: int, q: int) -> np.ndarray:
    mult = ((1j * grid.kx) ** p)[:, None] * ((1j * grid.ky) ** q)[None, :]
    return np.where(grid.mask(p, q), mult, 0.0)


def _check_2d(field: np.ndarray, grid: Grid2D) -> None:
    if field.ndim < 2 or field.shape[-2:] != grid.shape:
        raise ShapeError(f"field trailing shape {field.shape[-2:]} does not match grid {grid.shape}")


def spatial_derivative_2d(field, grid: Grid2D, p: int, q: int) -> np.ndarray:
    """``d^(p+q) / dx^p dy^q`` over the last two axes."""
    f = np.asarray(field, dtype=float)
    if p < 0 or q < 0 or p + q > MAX_SPATIAL_ORDER:
        raise UnsupportedOrderError(f"total order {p + q} not in 0..{MAX_SPATIAL_ORDER}")
    _check_2d(f, grid)
    spec = np.fft.fft2(f, axes=(-2, -1))
    return _real_part(np.fft.ifft2(_multiplier_2d(grid, p, q) * spec, axes=(-2, -1)))


def ns_stream_features(vorticity, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Velocity-like features ``(d_x psi, d_y psi)`` with ``lap(psi) = -vorticity``.

    Computed as the inverse transforms of ``i*kx/|k|^2`` and ``i*ky/|k|^2``
    times the vorticity spectrum.  The mean mode is dropped, which fixes the
    free additive constant of ``psi``.
    """
    w = np.asarray(vorticity, dtype=float)
    _check_2d(w, grid)
    kx = grid.kx[:, None]
    ky = grid.ky[None, :]
    k2 = kx**2 + ky**2
    k2[0, 0] = 1.0
    inv = 1.0 / k2
    inv[0, 0] = 0.0
    spec = np.fft.fft2(w, axes=(-2, -1))
    fx = np.where(grid.mask(1, 0), 1j * kx * inv, 0.0)
    fy = np.where(grid.mask(0, 1), 1j * ky * inv, 0.0)
    vx = _real_part(np.fft.ifft2(fx * spec, axes=(-2, -1)))
    vy = _real_part(np.fft.ifft2(fy * spec, axes=(-2, -1)))
    return vx, vy


def derivative_term_count(spatial_dim: int, max_order: int) -> int:
    """Number of partial-derivative terms of total order ``<= max_order``."""
    if spatial_dim < 1 or max_order < 0:
        raise InvalidInputError("need spatial_dim >= 1 and max_order >= 0")
    counts = [d + 1 for d in range(max_order + 1)]
    for _ in range(spatial_dim - 1):
        counts = list(np.cumsum(counts))
    return int(counts[max_order])


def truncate(series, plan: SpectralPlan, axis: int = 0) -> np.ndarray:
    """Band-limit a series to ``|k| <= plan.cutoff``."""
    s = np.asarray(series, dtype=float)
    shape = [1] * s.ndim
    shape[axis] = plan.n_points
    mask = plan.mask(0).reshape(shape)
    return _real_part(np.fft.ifft(mask * np.fft.fft(s, axis=axis), axis=axis))


def _pad_axis(spec: np.ndarray, n_old: int, n_new: int, axis: int) -> np.ndarray:
    spec = np.moveaxis(spec, axis, -1)
    out = np.zeros(spec.shape[:-1] + (n_new,), dtype=complex)
    half = (n_old + 1) // 2
    out[..., :half] = spec[..., :half]
    out[..., n_new - (n_old - half):] = spec[..., half:]
    if n_old % 2 == 0:
        # split the old Nyquist mode evenly between +/- n_old/2
        nyq = spec[..., n_old // 2]
        out[..., n_old // 2] = 0.5 * nyq
        out[..., n_new - n_old // 2] = 0.5 * nyq
    return np.moveaxis(out, -1, axis)


def spectral_upsample(field, new_shape) -> np.ndarray:
    """Trigonometric interpolation of a periodic field onto a finer grid.

    ``new_shape`` is an int for 1-D fields (last axis) or a pair for 2-D
    fields (last two axes).  Band-limited input is reproduced exactly.
    """
    f = np.asarray(field, dtype=float)
    if np.isscalar(new_shape) or isinstance(new_shape, (int, np.integer)):
        new_shape = (int(new_shape),)
    new_shape = tuple(int(n) for n in new_shape)
    axes = tuple(range(f.ndim - len(new_shape), f.ndim))
    old_shape = tuple(f.shape[a] for a in axes)
    if any(n < o for n, o in zip(new_shape, old_shape)):
        raise InvalidInputError(f"cannot upsample {old_shape} to smaller {new_shape}")
    spec = np.fft.fftn(f, axes=axes)
    for a, o, n in zip(axes, old_shape, new_shape):
        if n != o:
            spec = _pad_axis(spec, o, n, a)
    scale = np.prod(new_shape) / np.prod(old_shape)
    return _real_part(np.fft.ifftn(spec * scale, axes=axes))
