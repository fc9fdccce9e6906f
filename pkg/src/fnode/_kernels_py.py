"""Pure-numpy implementations of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same semantics; the
package picks one at import time (see :mod:`fnode.accel`).
"""
import numpy as np

PARAMETRIC2D = 0
LORENZ63 = 1


def _rhs(system, params, s, u):
    if system == PARAMETRIC2D:
        cube = s**3
        out = np.empty_like(s)
        out[:, 0] = params[0] * cube[:, 0] + params[1] * cube[:, 1] + u[:, 0]
        out[:, 1] = params[2] * cube[:, 0] + params[3] * cube[:, 1] + u[:, 1]
        return out
    if system == LORENZ63:
        x, y, z = s[:, 0], s[:, 1], s[:, 2]
        rho = u[:, 0]
        return np.stack(
            [params[0] * (y - x), rho * x - y - x * z, x * y - params[1] * z], axis=1
        )
    raise ValueError(f"unknown system id {system}")


def rk4_ode(system, params, s0, times, controls, substeps):
    """Fixed-step RK4 over the sample grid with ``substeps`` steps per interval.

    Controls are linearly interpolated between sample times.  Returns the
    states at every sample time and the index of the first sample that went
    non-finite (-1 when all stayed finite).
    """
    params = np.asarray(params, dtype=np.float64)
    s = np.array(s0, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    n_batch, dim = s.shape
    n = times.size
    out = np.empty((n_batch, n, dim))
    out[:, 0] = s
    bad = np.zeros(n_batch, dtype=bool)
    for i in range(n - 1):
        u0 = controls[:, i]
        du = controls[:, i + 1] - u0
        h = (times[i + 1] - times[i]) / substeps
        for j in range(substeps):
            a = j / substeps
            m = (j + 0.5) / substeps
            b = (j + 1.0) / substeps
            ua = u0 + a * du
            um = u0 + m * du
            ub = u0 + b * du
            k1 = _rhs(system, params, s, ua)
            k2 = _rhs(system, params, s + 0.5 * h * k1, um)
            k3 = _rhs(system, params, s + 0.5 * h * k2, um)
            k4 = _rhs(system, params, s + h * k3, ub)
            s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, i + 1] = s
        bad |= ~np.all(np.isfinite(s), axis=1)
    failed = int(np.argmax(bad)) if bad.any() else -1
    return out, failed


def central_difference(y, dt):
    """Second-order central differences along axis 1 of a ``(B, N, D)`` array.

    The two end points use first-order one-sided differences.
    """
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    out[:, 1:-1] = (y[:, 2:] - y[:, :-2]) / (2.0 * dt)
    out[:, 0] = (y[:, 1] - y[:, 0]) / dt
    out[:, -1] = (y[:, -1] - y[:, -2]) / dt
    return out
