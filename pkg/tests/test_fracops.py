import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracvirial.errors import DomainError, InputError
from fracvirial.fracops import (FracParams, Grid, balakrishnan_apply, balakrishnan_scalar, c_s, energy,
                                frac_laplacian, frac_seminorm, plancherel_weight, resolvent_field,
                                weighted_gradient_integral)


@pytest.fixture(scope="module")
def grid2():
    return Grid(2, 2 * math.pi, 32)


def test_zero_field_maps_to_zero(grid2):
    z = grid2.zeros()
    assert np.all(frac_laplacian(z, 0.7).values == 0)
    assert np.all(balakrishnan_apply(z, 0.7).values == 0)
    assert weighted_gradient_integral(z, 0.7) == 0


def test_plane_wave_is_eigenfunction(grid2):
    u = grid2.plane_wave((3, 4))
    out = frac_laplacian(u, 0.5)
    np.testing.assert_allclose(out.values, 5.0 * u.values, atol=1e-12)
    bal = balakrishnan_apply(u, 0.5)
    np.testing.assert_allclose(bal.values, 5.0 * u.values, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("x,s,expected", [(1.0, 0.3, 1.0), (2.0, 0.5, math.sqrt(2.0)), (10.0, 0.8, 10 ** 0.8)])
def test_balakrishnan_scalar(x, s, expected):
    assert balakrishnan_scalar(x, s) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("dim,points,s", [(1, 1024, 0.6), (2, 128, 0.75)])
def test_multiplier_matches_resolvent_quadrature_on_gaussian(dim, points, s):
    g = Grid(dim, 16.0, points)
    u = g.gaussian(1.0, 1.0)
    a = frac_laplacian(u, s).values
    b = balakrishnan_apply(u, s).values
    assert np.linalg.norm(a - b) / np.linalg.norm(a) <= 1e-6


def test_c_s_at_half():
    assert c_s(0.5) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)


def test_resolvent_on_plane_wave():
    g = Grid(2, 2 * math.pi, 16)
    u = g.plane_wave((2, 0))
    out = resolvent_field(u, 1.0, 0.5)
    np.testing.assert_allclose(out.values, (0.5641895835477563 / 5.0) * u.values, rtol=1e-12)


@pytest.mark.parametrize("m", [1e3, 1e6])
def test_resolvent_large_m_bound(m):
    g = Grid(1, 8.0, 64)
    u = g.gaussian(1.0, 1.0)
    assert resolvent_field(u, m, 0.6).l2_norm() <= c_s(0.6) * u.l2_norm() / m * (1 + 1e-12)


def test_resolvent_matches_dense_solve():
    # independent oracle: dense spectral second-derivative matrix on 64 points
    g = Grid(1, 8.0, 64)
    u = g.gaussian(1.0, 1.0)
    m, s = 2.0, 0.6
    n = g.points
    F = np.fft.fft(np.eye(n), axis=0)
    k = g.wavenumbers_1d
    lap = np.real(np.linalg.solve(F, (k ** 2)[:, None] * F))
    dense = c_s(s) * np.linalg.solve(lap + m * np.eye(n), u.values)
    np.testing.assert_allclose(resolvent_field(u, m, s).values, dense, atol=1e-10)


def test_plancherel_scalar_weight_closed_form():
    assert plancherel_weight(2.0, 0.5) == pytest.approx(0.25, rel=1e-10)


def test_weighted_gradient_integral_on_random_field():
    g = Grid(1, 16.0, 512)
    u = g.random_bandlimited(np.random.default_rng(7), band=6.0)
    exact = 0.7 * frac_seminorm(u, 0.7) ** 2
    assert weighted_gradient_integral(u, 0.7) == pytest.approx(exact, rel=1e-6)


def test_seminorm_of_plane_wave():
    g = Grid(2, math.pi, 32)
    u = g.plane_wave((2, 0))
    assert frac_seminorm(u, 0.8) == pytest.approx(math.sqrt(g.box_volume * 2 ** 1.6), rel=1e-12)


def test_seminorm_of_constant_is_zero():
    g = Grid(1, 4.0, 32)
    assert frac_seminorm(g.field(np.full(32, 3.0 + 0j)), 0.4) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), s=st.floats(0.55, 0.95))
def test_interpolation_inequality(seed, s):
    g = Grid(1, 10.0, 128)
    u = g.random_bandlimited(np.random.default_rng(seed), band=5.0)
    lhs = frac_seminorm(u, 0.5)
    rhs = frac_seminorm(u, s) ** (1 / (2 * s)) * u.l2_norm() ** (1 - 1 / (2 * s))
    assert lhs <= rhs * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2 ** 31))
def test_operator_is_linear(a, b, seed):
    g = Grid(1, 6.0, 64)
    rng = np.random.default_rng(seed)
    u, v = g.random_bandlimited(rng, 4.0), g.random_bandlimited(rng, 4.0)
    lhs = frac_laplacian(a * u + b * v, 0.6).values
    rhs = a * frac_laplacian(u, 0.6).values + b * frac_laplacian(v, 0.6).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_params_derived_exponents():
    p = FracParams(0.8, 1.0, 2)
    assert p.s_c == pytest.approx(0.2)
    assert p.delta == pytest.approx(0.4)
    assert p.p == 4.0
    assert FracParams(0.8, 0.8, 2).l2_critical


@pytest.mark.parametrize("kw", [dict(s=1.0, sigma=1.0, dim=2), dict(s=0.5, sigma=0.0, dim=1),
                                dict(s=0.5, sigma=1.0, dim=0)])
def test_params_reject_bad_input(kw):
    with pytest.raises(DomainError):
        FracParams(**kw)


@pytest.mark.parametrize("args", [(3, 1.0, 32), (1, -1.0, 32), (1, 1.0, 48)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(InputError):
        Grid(*args)


def test_energy_of_scaled_field():
    g = Grid(1, 16.0, 256)
    u = g.gaussian(1.0, 1.0)
    p = FracParams(0.5, 1.0, 1)
    lam = 1.7
    kin = 0.5 * frac_seminorm(u, p.s) ** 2
    pot = u.lp_power(p.p) / p.p
    assert energy(lam * u, p) == pytest.approx(lam ** 2 * kin - lam ** p.p * pot, rel=1e-12)
