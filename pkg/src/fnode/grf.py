"""Gaussian random field sampling with a squared-exponential (RBF) kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalError

MAX_JITTER = 1e-4


@dataclass(frozen=True)
class GrfConfig:
    """Field ``mean + scale * G`` where ``G`` is zero-mean, unit-variance.

    ``periods`` makes the kernel periodic along each coordinate (used for
    forcing fields on periodic spatial domains); ``None`` means the plain
    Euclidean kernel.
    """

    mean: float = 0.0
    length_scale: float = 0.1
    scale: float = 1.0
    jitter: float = 1e-8
    periods: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.length_scale > 0:
            raise InvalidInputError(f"length_scale must be positive, got {self.length_scale}")
        if not self.jitter > 0:
            raise InvalidInputError(f"jitter must be positive, got {self.jitter}")


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 1:
        raise InvalidInputError("need at least one point")
    return x


def grf_covariance(points, length_scale: float, periods=None) -> np.ndarray:
    """RBF covariance ``exp(-|xi - xj|^2 / (2 l^2))``.

    With ``periods`` the kernel is periodised by summing over neighbouring
    images, which keeps it positive semi-definite on the torus.
    """
    if not length_scale > 0:
        raise InvalidInputError(f"length_scale must be positive, got {length_scale}")
    x = _as_points(points)
    diff = x[:, None, :] - x[None, :, :]
    if periods is None:
        sq = np.sum(diff**2, axis=-1)
        return np.exp(-sq / (2.0 * length_scale**2))
    periods = np.broadcast_to(np.asarray(periods, dtype=float), (x.shape[1],))
    cov = np.ones(diff.shape[:2])
    shifts = np.arange(-3, 4)
    for d, period in enumerate(periods):
        delta = diff[..., d][..., None] + shifts * period
        cov *= np.exp(-(delta**2) / (2.0 * length_scale**2)).sum(axis=-1)
    return cov


def cholesky_factor(cov: np.ndarray, jitter: float) -> np.ndarray:
    """Lower Cholesky factor of ``cov + jitter*I``, escalating jitter x10 up to 1e-4."""
    eye = np.eye(cov.shape[0])
    j = jitter
    while True:
        try:
            return np.linalg.cholesky(cov + j * eye)
        except np.linalg.LinAlgError:
            if j >= MAX_JITTER:
                raise NumericalError(
                    f"covariance not positive definite even with jitter {j:g}"
                ) from None
            j = min(j * 10.0, MAX_JITTER)


def sample_grf(points, config: GrfConfig, seed, size: int | None = None) -> np.ndarray:
    """Draw ``mean + scale * L z`` with ``z`` from a seeded generator.

    ``seed`` may be an int, a :class:`numpy.random.SeedSequence` or a
    :class:`numpy.random.Generator`.  With ``size`` the result has shape
    ``(size, n_points)`` and each row is an independent draw.
    """
    x = _as_points(points)
    cov = grf_covariance(x, config.length_scale, config.periods)
    chol = cholesky_factor(cov, config.jitter)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = x.shape[0]
    z = rng.standard_normal(n if size is None else (size, n))
    field = z @ chol.T
    return config.mean + config.scale * field
