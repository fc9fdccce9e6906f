import math

import numpy as np
import pytest

from fnode.errors import BudgetError, DivergenceError, InvalidInputError
from fnode.integrate import (
    IntegratorConfig,
    LinearControl,
    count_integrations,
    integrate,
    rollout,
)
from fnode.spectral import Grid1D
from fnode.systems import default_system, generate_dataset
from fnode.training import FeatureBuilder, FeatureSpec, OracleModel


class Counter:
    def __init__(self, f):
        self.f = f
        self.n = 0

    def __call__(self, y, t):
        self.n += 1
        return self.f(y, t)


decay = lambda y, t: -y  # noqa: E731


def test_config_validation():
    with pytest.raises(InvalidInputError):
        IntegratorConfig("rk4")
    with pytest.raises(InvalidInputError):
        IntegratorConfig("euler", fixed_step=-1.0)
    with pytest.raises(InvalidInputError):
        IntegratorConfig("dopri5", rtol=0.0)
    with pytest.raises(InvalidInputError):
        IntegratorConfig("bogus", fixed_step=0.1)
    assert IntegratorConfig("dopri5").rtol == 1e-6
    assert IntegratorConfig("dopri5").atol == 1e-8


@pytest.mark.parametrize("cfg", [IntegratorConfig("euler", 0.1), IntegratorConfig("rk4", 0.1), IntegratorConfig("dopri5")])
def test_zero_field_constant(cfg):
    s0 = np.array([1.0, -2.0, 3.0])
    _, ys = integrate(lambda y, t: np.zeros_like(y), s0, 0.0, 1.0, cfg, t_eval=np.linspace(0, 1, 5))
    np.testing.assert_array_equal(ys, np.broadcast_to(s0, ys.shape))


def test_rk4_exponential():
    _, ys = integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig("rk4", 1e-3))
    assert abs(ys[-1] - math.exp(-1)) < 1e-9


def test_dopri5_accuracy_and_efficiency():
    fd = Counter(decay)
    _, ys = integrate(fd, 1.0, 0.0, 1.0, IntegratorConfig("dopri5", rtol=1e-6))
    assert abs(ys[-1] - math.exp(-1)) < 1e-5
    fr = Counter(decay)
    integrate(fr, 1.0, 0.0, 1.0, IntegratorConfig("rk4", 1e-4))
    assert fr.n >= 10 * fd.n


def test_dopri5_dense_output():
    t = np.linspace(0, 2, 37)
    _, ys = integrate(decay, 1.0, 0.0, 2.0, IntegratorConfig("dopri5", rtol=1e-8, atol=1e-10), t_eval=t)
    np.testing.assert_allclose(ys, np.exp(-t), atol=1e-7)


def test_dopri5_accepted_errors_within_tolerance():
    stats = {}
    f = lambda y, t: np.array([y[1], -y[0] + np.sin(3 * t)])  # noqa: E731
    integrate(f, np.array([1.0, 0.0]), 0.0, 10.0, IntegratorConfig("dopri5", rtol=1e-6, atol=1e-8), stats=stats)
    assert stats["accepted_errors"]
    assert max(stats["accepted_errors"]) <= 1.0


def _slope(method, hs):
    errs = []
    for h in hs:
        _, ys = integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig(method, h))
        errs.append(abs(ys[-1] - math.exp(-1)))
    return np.polyfit(np.log(hs), np.log(errs), 1)[0]


def test_convergence_orders():
    hs = np.array([1e-1, 5e-2, 2e-2, 1e-2])
    assert abs(_slope("rk4", hs) - 4) < 0.3
    assert abs(_slope("euler", np.array([1e-1, 1e-2, 1e-3])) - 1) < 0.2


def test_time_reversal():
    f = lambda y, t: np.array([y[1], -np.sin(y[0])])  # noqa: E731
    s0 = np.array([1.0, 0.3])
    cfg = IntegratorConfig("rk4", 1e-3)
    _, fwd = integrate(f, s0, 0.0, 2.0, cfg)
    _, back = integrate(lambda y, t: -f(y, t), fwd[-1], 0.0, 2.0, cfg)
    np.testing.assert_allclose(back[-1], s0, atol=1e-6)


def test_fixed_steps_land_on_output_times():
    t = np.array([0.0, 0.15, 0.4, 1.0])
    _, ys = integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig("rk4", 0.1), t_eval=t)
    np.testing.assert_allclose(ys, np.exp(-t), atol=1e-6)


def test_errors():
    with pytest.raises(InvalidInputError):
        integrate(decay, 1.0, 1.0, 1.0, IntegratorConfig("rk4", 0.1))
    with pytest.raises(InvalidInputError):
        integrate(decay, np.nan, 0.0, 1.0, IntegratorConfig("rk4", 0.1))
    with pytest.raises(BudgetError):
        integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig("rk4", 1e-3, max_steps=10))
    with pytest.raises(BudgetError):
        integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig("dopri5", rtol=1e-12, atol=1e-12, max_steps=5))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as info:
            integrate(lambda y, t: y**2, 1.0, 0.0, 2.0, IntegratorConfig("rk4", 0.01))
    assert info.value.time is not None and 0.9 < info.value.time < 1.2


def test_counter():
    with count_integrations() as calls:
        integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig("euler", 0.5))
        integrate(decay, 1.0, 0.0, 1.0, IntegratorConfig("euler", 0.5))
    assert calls() == 2


def test_linear_control():
    times = np.array([0.0, 1.0, 2.0])
    ctrl = np.array([[[0.0], [2.0], [0.0]]])
    lc = LinearControl(times, ctrl)
    np.testing.assert_allclose(lc(0.25), [[0.5]])
    np.testing.assert_allclose(lc(1.5), [[1.0]])
    np.testing.assert_allclose(lc(2.0), [[0.0]])
    with pytest.raises(InvalidInputError):
        lc(2.5)


def test_rollout_with_true_rhs_matches_generator():
    system = default_system("parametric2d")
    ds = generate_dataset(system, 2, 1000, seed=0)
    spec = FeatureSpec.for_system(system)
    pred = rollout(OracleModel(system, spec), FeatureBuilder(system, spec), ds.initial_states, ds.controls, ds.times[0],
                   IntegratorConfig("rk4", ds.dt / 10))
    assert pred.shape == ds.states.shape
    scale = np.max(np.abs(ds.states))
    assert np.max(np.abs(pred - ds.states)) < 1e-5 * scale


def test_rollout_pde_with_true_rhs():
    system = default_system("dr").with_grid(Grid1D(16, 1.0))
    ds = generate_dataset(system, 2, 100, seed=0)
    spec = FeatureSpec.for_system(system)
    pred = rollout(OracleModel(system, spec), FeatureBuilder(system, spec), ds.initial_states, ds.controls, ds.times[0],
                   IntegratorConfig("rk4", ds.dt / 20))
    assert np.max(np.abs(pred - ds.states)) < 1e-6


def test_zero_model_gives_constant_prediction():
    system = default_system("lorenz63")
    ds = generate_dataset(system, 3, 20, seed=0)
    spec = FeatureSpec.for_system(system)
    zero = lambda x: np.zeros((x.shape[0], 3))  # noqa: E731
    pred = rollout(zero, FeatureBuilder(system, spec), ds.initial_states, ds.controls, ds.times[0], IntegratorConfig("euler", 0.1))
    assert pred.shape == ds.states.shape
    np.testing.assert_array_equal(pred, np.broadcast_to(ds.initial_states[:, None], pred.shape))
