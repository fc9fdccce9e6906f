"""ODE solvers used for rollouts, augmentation and the NODE baseline.

Every call to :func:`integrate` increments a process-wide counter so tests
can check that simulation-free training never touches a solver.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, DivergenceError, InvalidInputError, ShapeError

METHODS = ("euler", "rk4", "dopri5")

_lock = threading.Lock()
_calls = 0


def integration_calls() -> int:
    return _calls


def _bump():
    global _calls
    with _lock:
        _calls += 1


@contextmanager
def count_integrations():
    """Yield a callable returning the number of integrations since entry."""
    start = _calls
    yield lambda: _calls - start


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    fixed_step: float | None = None
    rtol: float = 1e-6
    atol: float = 1e-8
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown integration method {self.method!r}")
        if self.method in ("euler", "rk4") and not (self.fixed_step and self.fixed_step > 0):
            raise InvalidInputError(f"{self.method} needs a positive fixed_step")
        if self.method == "dopri5" and not (self.rtol > 0 and self.atol > 0):
            raise InvalidInputError("dopri5 needs positive rtol and atol")
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be positive")


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# continuous extension coefficients (Hairer & Wanner's DOPRI5 dense output)
_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)


def _check_finite(y, t_good):
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"state became non-finite after t={t_good:g}", time=t_good)


def _fixed(f, y, t_out, h, method, max_steps):
    out = np.empty((len(t_out),) + y.shape)
    out[0] = y
    steps = 0
    for i in range(len(t_out) - 1):
        a, b = t_out[i], t_out[i + 1]
        n = max(1, int(math.ceil((b - a) / h - 1e-9)))
        step = (b - a) / n
        steps += n
        if steps > max_steps:
            raise BudgetError(f"more than {max_steps} steps required")
        t = a
        for j in range(n):
            if method == "euler":
                y = y + step * f(y, t)
            else:
                k1 = f(y, t)
                k2 = f(y + 0.5 * step * k1, t + 0.5 * step)
                k3 = f(y + 0.5 * step * k2, t + 0.5 * step)
                k4 = f(y + step * k3, t + step)
                y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t_next = a + (j + 1) * step
            _check_finite(y, t)
            t = t_next
        out[i + 1] = y
    return out


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = f(y0 + h0 * f0, t0 + h0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100 * h0, h1, span)


def _dopri5(f, y, t_out, rtol, atol, max_steps, stats):
    t0, t1 = t_out[0], t_out[-1]
    out = np.empty((len(t_out),) + y.shape)
    out[0] = y
    k1 = f(y, t0)
    h = _initial_step(f, t0, y, k1, rtol, atol, t1 - t0)
    beta = 0.04
    expo = 0.2 - 0.75 * beta
    err_old = 1e-4
    t = t0
    nxt = 1
    steps = 0
    while nxt < len(t_out):
        if steps >= max_steps:
            raise BudgetError(f"dopri5 exceeded {max_steps} steps")
        h = min(h, t1 - t)
        ks = [k1]
        for s in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
            ks.append(f(yi, t + _C[s] * h))
        y_new = y + h * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        steps += 1
        if not np.all(np.isfinite(y_new)):
            h *= 0.1
            if h < 1e-14 * max(1.0, abs(t)):
                raise DivergenceError(f"state became non-finite after t={t:g}", time=t)
            continue
        en = _error_norm(err, y, y_new, rtol, atol)
        if en <= 1.0:
            t_new = t + h
            stats["accepted_errors"].append(en)
            ydiff = y_new - y
            bspl = h * ks[0] - ydiff
            r5 = h * sum(d * k for d, k in zip(_D, ks) if d != 0.0)
            while nxt < len(t_out) and t_out[nxt] <= t_new + 1e-12 * max(1.0, abs(t_new)):
                theta = (t_out[nxt] - t) / h
                th1 = 1.0 - theta
                out[nxt] = y + theta * (ydiff + th1 * (bspl + theta * (ydiff - h * ks[6] - bspl + th1 * r5)))
                nxt += 1
            fac = max(0.2, min(10.0, 0.9 * en**-expo * err_old**beta)) if en > 0 else 10.0
            err_old = max(en, 1e-4)
            y, t, k1 = y_new, t_new, ks[6]
            h *= fac
        else:
            stats["rejected"] += 1
            h *= max(0.2, 0.9 * en**-0.2)
    stats["steps"] = steps
    return out


def integrate(f, s0, t0: float, t1: float, config: IntegratorConfig, t_eval=None, stats=None):
    """Integrate ``ds/dt = f(s, t)`` from ``t0`` to ``t1``.

    ``s0`` may be any array; ``f`` must return an array of the same shape.
    Returns ``(times, states)`` with ``states[i]`` the solution at
    ``times[i]``.  Output times default to ``[t0, t1]``.
    """
    _bump()
    y0 = np.array(s0, dtype=float)
    if not t1 > t0:
        raise InvalidInputError(f"need t1 > t0, got [{t0}, {t1}]")
    if not np.all(np.isfinite(y0)):
        raise InvalidInputError("initial state is not finite")
    t_out = np.array([t0, t1] if t_eval is None else t_eval, dtype=float)
    if t_out[0] != t0 or t_out[-1] > t1 + 1e-12 or np.any(np.diff(t_out) <= 0):
        raise InvalidInputError("t_eval must start at t0, increase strictly and stay within [t0, t1]")
    if stats is None:
        stats = {}
    stats.setdefault("accepted_errors", [])
    stats.setdefault("rejected", 0)
    if config.method == "dopri5":
        states = _dopri5(f, y0, t_out, config.rtol, config.atol, config.max_steps, stats)
    else:
        states = _fixed(f, y0, t_out, config.fixed_step, config.method, config.max_steps)
    return t_out, states


class LinearControl:
    """Piecewise-linear interpolation of a sampled control series.

    ``controls`` has shape ``(batch, N, ...)`` over the shared ``times``.
    """

    def __init__(self, times, controls):
        self.times = np.asarray(times, dtype=float)
        self.controls = np.asarray(controls, dtype=float)
        if self.controls.shape[1] != self.times.size:
            raise ShapeError("controls and times disagree in length")
        self._tol = 1e-9 * max(1.0, abs(self.times[-1]))

    def __call__(self, t: float) -> np.ndarray:
        times = self.times
        if t < times[0] - self._tol or t > times[-1] + self._tol:
            raise InvalidInputError(f"t={t:g} outside control range [{times[0]:g}, {times[-1]:g}]")
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), times.size - 2)
        w = (t - times[i]) / (times[i + 1] - times[i])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.controls[:, i] + w * self.controls[:, i + 1]


def model_vector_field(model, features_fn):
    """Turn a pointwise feature map and model into ``g(states, controls)``."""
    forward = model.forward if hasattr(model, "forward") else model

    def field(states, controls):
        x = features_fn(states, controls)
        return np.asarray(forward(x.reshape(-1, x.shape[-1]))).reshape(states.shape)

    return field


def rollout(model, features_fn, s0, control_series, times, config: IntegratorConfig):
    """Predict states at ``times`` by integrating the learned vector field.

    ``s0`` is ``(batch, *state_shape)``, ``control_series`` is
    ``(batch, N, *control_shape)`` sampled at ``times``.  ``features_fn``
    maps ``(states, controls)`` to feature rows ``(..., n_inputs)``; for
    PDE states it recomputes spatial derivatives of the current state.
    Returns ``(batch, N, *state_shape)``.
    """
    times = np.asarray(times, dtype=float)
    control = LinearControl(times, control_series)
    field = model_vector_field(model, features_fn)
    _, states = integrate(lambda s, t: field(s, control(t)), s0, times[0], times[-1], config, t_eval=times)
    return np.moveaxis(states, 0, 1)
