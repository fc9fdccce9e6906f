import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import direct_dft
from fnode.errors import (
    InvalidInputError,
    NumericalError,
    NyquistError,
    ShapeError,
    UnsupportedOrderError,
    UnsupportedSamplingError,
)
from fnode.spectral import (
    Grid1D,
    Grid2D,
    SpectralPlan,
    derivative_term_count,
    dft,
    idft,
    ns_stream_features,
    signed_indices,
    spatial_derivative_1d,
    spatial_derivative_2d,
    spectral_upsample,
    temporal_derivative,
    truncate,
    uniform_spacing,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def grid_2pi(n=64, **kw):
    return Grid2D(n, n, 2 * np.pi, 2 * np.pi, **kw)


# -- plans and grids ------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 8, 9])
def test_signed_frequency_layout(n):
    if n < 2:
        with pytest.raises(InvalidInputError):
            SpectralPlan(n, 1.0, 0)
        return
    plan = SpectralPlan(n, 3.0, n // 2)
    expected = [k if k < (n + 1) // 2 else k - n for k in range(n)]
    assert list(signed_indices(n)) == expected
    np.testing.assert_allclose(plan.signed_freqs, 2 * np.pi / 3.0 * np.array(expected))
    assert plan.signed_freqs.shape == (n,)


def test_plan_rejects_cutoff_above_nyquist():
    SpectralPlan(10, 1.0, 5)
    with pytest.raises(NyquistError):
        SpectralPlan(10, 1.0, 6)
    with pytest.raises(InvalidInputError):
        SpectralPlan(10, -1.0, 2)


def test_plan_is_immutable():
    plan = SpectralPlan(16, 1.0, 4)
    with pytest.raises(Exception):
        plan.cutoff = 2
    with pytest.raises(ValueError):
        plan.signed_freqs[0] = 1.0


def test_grid2d_invariants():
    g = Grid2D(8, 6, 2.0, 3.0)
    assert (g.cutoff_x, g.cutoff_y) == (4, 3)
    assert g.lx / g.nx > 0 and g.ly / g.ny > 0
    with pytest.raises(NyquistError):
        Grid2D(8, 8, 1.0, 1.0, cutoff_x=5)
    with pytest.raises(InvalidInputError):
        Grid2D(8, 8, 0.0, 1.0)


def test_plan_for_series_and_uniform_spacing():
    t = np.arange(20) * 0.1
    plan = SpectralPlan.for_series(t, 5)
    assert plan.n_points == 20
    assert plan.period == pytest.approx(2.0)
    assert uniform_spacing(t) == pytest.approx(0.1)
    bad = t.copy()
    bad[5] += 0.01
    with pytest.raises(UnsupportedSamplingError):
        uniform_spacing(bad)


# -- dft ------------------------------------------------------------------------


def test_dft_of_constant():
    c = 2.5
    coeffs = dft(np.full(8, c))
    assert abs(coeffs[0] - 8 * c) < 1e-12
    assert np.max(np.abs(coeffs[1:])) < 1e-12


def test_dft_of_cosine_matches_direct_sum():
    n = np.arange(16)
    s = np.cos(2 * np.pi * n / 16)
    coeffs = dft(s)
    oracle = direct_dft(s)
    np.testing.assert_allclose(coeffs, oracle, atol=1e-12)
    assert abs(coeffs[1] - 8) < 1e-12 and abs(coeffs[15] - 8) < 1e-12
    others = np.delete(coeffs, [1, 15])
    assert np.max(np.abs(others)) < 1e-12


@given(arrays(np.float64, st.integers(2, 64), elements=finite))
def test_dft_roundtrip_and_direct_sum(x):
    coeffs = dft(x)
    np.testing.assert_allclose(coeffs, direct_dft(x), atol=1e-8 * max(1.0, np.abs(x).sum()))
    back = idft(coeffs)
    assert np.max(np.abs(back.real - x)) <= 1e-10 * max(1.0, np.max(np.abs(x)))


@given(arrays(np.float64, st.integers(2, 40), elements=finite))
def test_dft_conjugate_symmetric_for_real_input(x):
    c = dft(x)
    n = x.size
    idx = (-np.arange(n)) % n
    np.testing.assert_allclose(c, np.conj(c[idx]), atol=1e-9 * max(1.0, np.abs(x).sum()))


def test_dft_input_errors():
    with pytest.raises(InvalidInputError):
        dft([1.0])
    with pytest.raises(InvalidInputError):
        dft([1.0, np.nan, 2.0])


# -- temporal derivative --------------------------------------------------------


def test_temporal_derivative_of_constant_is_zero():
    out = temporal_derivative(np.full(32, 4.0), SpectralPlan(32, 2.0, 16))
    assert np.max(np.abs(out)) < 1e-12


def test_temporal_derivative_of_sine():
    T, n = 3.0, 128
    t = np.arange(n) * T / n
    out = temporal_derivative(np.sin(2 * np.pi * t / T), SpectralPlan(n, T, 32))
    assert np.max(np.abs(out - 2 * np.pi / T * np.cos(2 * np.pi * t / T))) < 1e-8


def test_truncation_drops_high_harmonic():
    T, n = 1.0, 128
    t = np.arange(n) * T / n
    s = np.sin(2 * np.pi * t / T) + 0.3 * np.sin(12 * np.pi * t / T)
    out = temporal_derivative(s, SpectralPlan(n, T, 1))
    dropped = 0.3 * 12 * np.pi / T
    err = np.max(np.abs(out - (2 * np.pi / T * np.cos(2 * np.pi * t / T) + 0.3 * 12 * np.pi / T * np.cos(12 * np.pi * t / T))))
    assert abs(err - dropped) <= 0.05 * dropped


def test_convergence_in_cutoff():
    n = 256
    t = np.arange(n) / n
    h = np.sin(2 * np.pi * t) + 0.5 * np.cos(6 * np.pi * t)
    exact = 2 * np.pi * np.cos(2 * np.pi * t) - 3 * np.pi * np.sin(6 * np.pi * t)
    errs = [np.max(np.abs(temporal_derivative(h, SpectralPlan(n, 1.0, k)) - exact)) for k in (1, 2, 3, 4, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert max(errs[2:]) < 1e-8


def test_nyquist_bin_zeroed_for_odd_orders():
    n = 8
    s = np.cos(np.pi * np.arange(n))  # pure Nyquist mode
    plan = SpectralPlan(n, 1.0, n // 2)
    assert np.max(np.abs(temporal_derivative(s, plan, order=1))) < 1e-12
    second = temporal_derivative(s, plan, order=2)
    np.testing.assert_allclose(second, -((2 * np.pi * n / 2) ** 2) * s, atol=1e-8)


def test_temporal_derivative_shape_error():
    with pytest.raises(ShapeError):
        temporal_derivative(np.zeros(10), SpectralPlan(12, 1.0, 3))


def test_temporal_derivative_along_axis():
    n = 64
    t = np.arange(n) / n
    block = np.stack([np.sin(2 * np.pi * t), np.cos(4 * np.pi * t)], axis=1)
    out = temporal_derivative(block, SpectralPlan(n, 1.0, 10), axis=0)
    np.testing.assert_allclose(out[:, 0], 2 * np.pi * np.cos(2 * np.pi * t), atol=1e-9)
    out_t = temporal_derivative(block.T, SpectralPlan(n, 1.0, 10), axis=1)
    np.testing.assert_allclose(out_t, out.T, atol=1e-12)


@given(
    arrays(np.float64, 32, elements=finite),
    arrays(np.float64, 32, elements=finite),
    st.floats(-5, 5),
    st.floats(-5, 5),
    st.integers(0, 16),
)
def test_temporal_derivative_is_linear(f, g, a, b, k):
    plan = SpectralPlan(32, 2.0, k)
    lhs = temporal_derivative(a * f + b * g, plan)
    rhs = a * temporal_derivative(f, plan) + b * temporal_derivative(g, plan)
    scale = max(1.0, np.max(np.abs(lhs)), np.max(np.abs(rhs)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


@given(arrays(np.float64, st.integers(4, 48), elements=finite), st.integers(1, 3))
def test_derivative_output_has_negligible_imaginary_residue(x, order):
    n = x.size
    plan = SpectralPlan(n, 1.0, n // 2)
    raw = np.fft.ifft(plan.multiplier(order) * np.fft.fft(x))
    scale = max(1.0, np.max(np.abs(raw.real)))
    assert np.max(np.abs(raw.imag)) < 1e-10 * scale


def test_large_imaginary_residue_raises():
    from fnode.spectral import _real_part

    with pytest.raises(NumericalError):
        _real_part(np.array([1.0 + 1e-3j, 2.0]))


@given(arrays(np.float64, st.integers(4, 40), elements=finite), st.data())
def test_truncation_is_idempotent(x, data):
    n = x.size
    plan = SpectralPlan(n, 1.0, data.draw(st.integers(0, n // 2)))
    once = truncate(x, plan)
    twice = truncate(once, plan)
    assert np.max(np.abs(once - twice)) <= 1e-10 * max(1.0, np.max(np.abs(x)))


# -- spatial derivatives ----------------------------------------------------------


@pytest.mark.parametrize("order,expected", [(1, np.cos), (2, lambda x: -np.sin(x)), (3, lambda x: -np.cos(x)), (4, np.sin)])
def test_spatial_derivative_1d_of_sine(order, expected):
    x = np.arange(64) * 2 * np.pi / 64
    out = spatial_derivative_1d(np.sin(x), 2 * np.pi, order)
    # round-off in the top modes grows like (N/2)^order
    assert np.max(np.abs(out - expected(x))) < (1e-10 if order <= 2 else 1e-8)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_spatial_derivative_of_constant(order):
    assert np.max(np.abs(spatial_derivative_1d(np.full(16, 3.0), 5.0, order))) < 1e-12


def test_spatial_derivative_1d_errors():
    with pytest.raises(UnsupportedOrderError):
        spatial_derivative_1d(np.zeros(16), 1.0, 5)
    with pytest.raises(ShapeError):
        spatial_derivative_1d(np.zeros(3), 1.0, 1)


@given(arrays(np.float64, st.sampled_from([5, 7, 9, 15, 33]), elements=st.floats(-10, 10)))
def test_second_derivative_equals_first_applied_twice(x):
    # odd lengths have no Nyquist bin, so full-band composition is exact
    length = 3.0
    once = spatial_derivative_1d(spatial_derivative_1d(x, length, 1), length, 1)
    twice = spatial_derivative_1d(x, length, 2)
    assert np.max(np.abs(once - twice)) <= 1e-8 * max(1.0, np.max(np.abs(twice)))


def _sxsy(n=64):
    g = grid_2pi(n)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    return g, X, Y


@pytest.mark.parametrize(
    "p,q,fn",
    [
        (0, 0, lambda X, Y: np.sin(X) * np.sin(Y)),
        (1, 0, lambda X, Y: np.cos(X) * np.sin(Y)),
        (0, 1, lambda X, Y: np.sin(X) * np.cos(Y)),
        (1, 1, lambda X, Y: np.cos(X) * np.cos(Y)),
        (2, 0, lambda X, Y: -np.sin(X) * np.sin(Y)),
        (0, 2, lambda X, Y: -np.sin(X) * np.sin(Y)),
        (2, 1, lambda X, Y: -np.sin(X) * np.cos(Y)),
        (1, 2, lambda X, Y: -np.cos(X) * np.sin(Y)),
        (2, 2, lambda X, Y: np.sin(X) * np.sin(Y)),
    ],
)
def test_spatial_derivative_2d_table(p, q, fn):
    g, X, Y = _sxsy()
    out = spatial_derivative_2d(np.sin(X) * np.sin(Y), g, p, q)
    assert np.max(np.abs(out - fn(X, Y))) < 1e-9


def test_spatial_derivative_2d_errors():
    g = grid_2pi(8)
    with pytest.raises(ShapeError):
        spatial_derivative_2d(np.zeros((8, 7)), g, 1, 0)
    with pytest.raises(UnsupportedOrderError):
        spatial_derivative_2d(np.zeros((8, 8)), g, 3, 2)


def test_ns_stream_features_sin_sin():
    g, X, Y = _sxsy()
    s = np.sin(X) * np.sin(Y)
    vx, vy = ns_stream_features(s, g)
    # lap(gamma) = -s has gamma = s / 2
    np.testing.assert_allclose(vx, np.cos(X) * np.sin(Y) / 2, atol=1e-9)
    np.testing.assert_allclose(vy, np.sin(X) * np.cos(Y) / 2, atol=1e-9)


def test_ns_stream_features_eigenvalue_five():
    g, X, Y = _sxsy(32)
    s = np.sin(2 * X) * np.sin(Y)
    vx, vy = ns_stream_features(s, g)
    gamma = s / 5
    np.testing.assert_allclose(vx, spatial_derivative_2d(gamma, g, 1, 0), atol=1e-9)
    np.testing.assert_allclose(vy, spatial_derivative_2d(gamma, g, 0, 1), atol=1e-9)


def test_ns_stream_features_constant_is_zero():
    vx, vy = ns_stream_features(np.full((16, 16), 7.0), grid_2pi(16))
    assert np.max(np.abs(vx)) < 1e-12 and np.max(np.abs(vy)) < 1e-12


def test_ns_stream_features_non_square_domain():
    g = Grid2D(32, 16, 2.0, 4.0)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    kx, ky = np.pi, 0.5 * np.pi
    s = np.cos(kx * X) * np.sin(ky * Y)
    vx, _ = ns_stream_features(s, g)
    gamma = s / (kx**2 + ky**2)
    np.testing.assert_allclose(vx, -kx * np.sin(kx * X) * np.sin(ky * Y) / (kx**2 + ky**2), atol=1e-10)
    np.testing.assert_allclose(vx, spatial_derivative_2d(gamma, g, 1, 0), atol=1e-10)


@pytest.mark.parametrize("D,d,expected", [(1, 4, 5), (2, 4, 15), (1, 0, 1), (3, 2, 10), (2, 0, 1)])
def test_derivative_term_count(D, d, expected):
    assert derivative_term_count(D, d) == expected


def test_derivative_term_count_matches_monomial_count():
    from math import comb

    for D in range(1, 4):
        for d in range(0, 6):
            # number of multi-indices in D variables of total order <= d
            assert derivative_term_count(D, d) == comb(d + D, D)


# -- upsampling -----------------------------------------------------------------


def test_spectral_upsample_band_limited_is_exact():
    x32 = Grid1D(32, 1.0).x
    x128 = Grid1D(128, 1.0).x
    f = lambda x: 1 + np.cos(2 * np.pi * x) + 0.3 * np.sin(10 * np.pi * x)  # noqa: E731
    up = spectral_upsample(f(x32), 128)
    assert np.max(np.abs(up - f(x128))) < 1e-10


def test_spectral_upsample_2d_and_identity():
    g = Grid2D(16, 8, 2.0, 2.0)
    X, Y = np.meshgrid(g.x, g.y, indexing="ij")
    f = np.sin(np.pi * X) * np.cos(np.pi * Y)
    g2 = Grid2D(32, 32, 2.0, 2.0)
    X2, Y2 = np.meshgrid(g2.x, g2.y, indexing="ij")
    np.testing.assert_allclose(spectral_upsample(f, (32, 32)), np.sin(np.pi * X2) * np.cos(np.pi * Y2), atol=1e-10)
    np.testing.assert_allclose(spectral_upsample(f, (16, 8)), f, atol=1e-12)
    with pytest.raises(InvalidInputError):
        spectral_upsample(f, (8, 8))


def test_upsample_keeps_nyquist_content_real():
    x = np.cos(np.pi * np.arange(8))
    up = spectral_upsample(x, 16)
    np.testing.assert_allclose(up[::2], x, atol=1e-12)
