import os
import subprocess
import sys

import numpy as np
import pytest

from fnode import accel
from fnode import _kernels_py as pure

compiled = pytest.importorskip("fnode._kernels")


def test_backend_is_reported():
    assert accel.BACKEND in ("cython", "python")
    assert accel.fallback is pure


def test_env_var_forces_fallback():
    env = dict(os.environ, FNODE_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from fnode.accel import BACKEND; print(BACKEND)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("system,dim,params,cdim", [(0, 2, [-0.1, 2.0, -2.0, -0.1], 2), (1, 3, [10.0, 8 / 3], 1)])
def test_rk4_backends_agree(system, dim, params, cdim):
    rng = np.random.default_rng(system)
    s0 = rng.normal(size=(3, dim))
    times = np.linspace(0, 1, 40)
    controls = rng.normal(size=(3, 40, cdim)) + (28.0 if system == 1 else 0.0)
    a, fa = compiled.rk4_ode(system, np.array(params), s0, times, controls, 7)
    b, fb = pure.rk4_ode(system, np.array(params), s0, times, controls, 7)
    assert fa == fb == -1
    np.testing.assert_allclose(np.asarray(a), b, rtol=1e-12, atol=1e-12)


def test_rk4_backends_flag_the_same_divergent_sample():
    s0 = np.array([[0.1, 0.1], [50.0, 50.0], [0.2, 0.0]])
    times = np.linspace(0, 1, 10)
    controls = np.zeros((3, 10, 2))
    params = np.array([-0.1, 2.0, -2.0, -0.1])
    with np.errstate(over="ignore", invalid="ignore"):
        _, fa = compiled.rk4_ode(0, params, s0, times, controls, 2)
        _, fb = pure.rk4_ode(0, params, s0, times, controls, 2)
    assert fa == fb == 1


def test_central_difference_backends_agree():
    y = np.random.default_rng(0).normal(size=(4, 30, 3))
    np.testing.assert_allclose(np.asarray(compiled.central_difference(y, 0.1)), pure.central_difference(y, 0.1), rtol=1e-15)
