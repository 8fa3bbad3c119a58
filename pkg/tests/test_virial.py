import math

import numpy as np
import pytest

from fracvirial.cutoff import RescaledCutoff, build_profile
from fracvirial.errors import DomainError, SymmetryError
from fracvirial.fracops import FracParams, Grid, energy, frac_seminorm
from fracvirial.virial import (biharmonic_bound_A2, biharmonic_bound_explicit, direct_derivative, full_virial_rhs,
                               localized_virial, radial_estimate_decomposition, refined_decomposition,
                               strauss_ratio, tail_nonlinear, virial_bound_A1, virial_pairs, virial_rhs_general)

P = FracParams(0.8, 1.0, 2)


@pytest.fixture(scope="module")
def cut4():
    return RescaledCutoff(build_profile(), 4.0)


@pytest.fixture(scope="module")
def grid():
    return Grid(2, 48.0, 256)


def boosted(grid, v, centre, width=0.5):
    x, y = grid.coords
    rho = np.exp(-((x - centre[0]) ** 2 + (y - centre[1]) ** 2) / (2 * width ** 2))
    return grid.field(rho * np.exp(1j * (v[0] * x + v[1] * y))), rho


def test_real_field_has_zero_virial(grid, cut4):
    assert localized_virial(grid.gaussian(1.0, 1.0), cut4) == pytest.approx(0.0, abs=1e-12)


def test_symmetric_boost_has_zero_virial(grid, cut4):
    u, _ = boosted(grid, (2.0, 0.0), (0.0, 0.0))
    assert localized_virial(u, cut4) == pytest.approx(0.0, abs=1e-10)


def test_shifted_boost_matches_direct_quadrature(cut4):
    fine = Grid(2, 48.0, 512)
    u, rho = boosted(fine, (2.0, 0.0), (1.0, 0.0))
    x, _ = fine.coords
    expected = 2.0 * fine.cell_volume * np.sum(rho ** 2 * 2.0 * x)
    assert expected == pytest.approx(4.0 * fine.cell_volume * np.sum(rho ** 2), rel=1e-8)
    assert localized_virial(u, cut4) == pytest.approx(expected, rel=1e-8)


def test_full_virial_rhs_arithmetic():
    g = Grid(2, math.pi, 16)
    u = g.plane_wave((1, 0))
    u = (math.sqrt(3.0) / frac_seminorm(u, 0.8)) * u
    assert frac_seminorm(u, 0.8) ** 2 == pytest.approx(3.0)
    assert full_virial_rhs(u, P, -0.5) == pytest.approx(-6.4, rel=1e-12)


def test_full_virial_rhs_l2_critical_ignores_gradient():
    g = Grid(2, math.pi, 16)
    p = FracParams(0.8, 0.8, 2)
    u = 5.0 * g.plane_wave((2, 1))
    assert full_virial_rhs(u, p, -0.3) == pytest.approx(4 * 0.8 * 2 * -0.3, rel=1e-12)
    assert full_virial_rhs(g.zeros(), P, 0.0) == 0.0


def test_zero_field_gives_zero_terms(grid, cut4):
    rep = virial_rhs_general(grid.zeros(), cut4, P)
    for name in ("m_phi", "hessian_term", "biharmonic_term", "nonlinear_term", "rhs_total"):
        assert getattr(rep, name) == 0.0


def test_resolvent_form_matches_direct_commutator(cut4):
    # two independent evaluations of dM/dt on a non-radial field; they differ
    # only by spatial aliasing, so the gap must shrink under refinement
    gaps = []
    for points in (128, 256):
        u, _ = boosted(Grid(2, 48.0, points), (0.7, -0.4), (0.8, 0.3), width=1.2)
        u = 0.6 * u
        a, b = virial_rhs_general(u, cut4, P).rhs_total, direct_derivative(u, cut4, P)
        gaps.append(abs(a - b) / abs(b))
    assert gaps[1] <= 1e-7
    assert gaps[0] / gaps[1] >= 10


def test_radial_decomposition_is_exact_and_signed(grid, cut4):
    u = 0.8 * grid.gaussian(1.0, 0.7)
    d = radial_estimate_decomposition(u, cut4, P)
    assert abs(d.identity_residual) <= 1e-8 * abs(d.rhs_total)
    assert d.localization_defect >= -1e-10
    assert d.tail_nonlinear == pytest.approx(0.0, abs=1e-12)


def test_radial_decomposition_rejects_bad_eps(grid, cut4):
    with pytest.raises(DomainError):
        radial_estimate_decomposition(grid.gaussian(), cut4, P, eps=5.0)


def test_refined_decomposition_beta(grid, cut4):
    p = FracParams(0.8, 0.8, 2)
    d = refined_decomposition(0.5 * grid.gaussian(1.0, 1.0), cut4, p, eta=0.5)
    assert d.beta == pytest.approx(4.0)
    assert d.psi2_pow_integral >= 0
    with pytest.raises(DomainError):
        refined_decomposition(grid.gaussian(), cut4, P)


def test_strauss_ratio_homogeneous():
    g = Grid(2, 16.0, 128)
    u = g.gaussian(1.0, 1.3)
    assert strauss_ratio(g.zeros(), 0.6) == 0.0
    assert strauss_ratio(3.7 * u, 0.6) == pytest.approx(strauss_ratio(u, 0.6), rel=1e-12)
    with pytest.raises(SymmetryError):
        strauss_ratio(g.gaussian(1.0, 1.0, center=(1.0, 0.0)), 0.6)


def test_bound_a1_real_field(grid, cut4):
    rep = virial_bound_A1(grid.gaussian(1.0, 1.0), cut4)
    assert rep["lhs"] == pytest.approx(0.0, abs=1e-12)


def test_bound_a2_scaling_and_explicit_constant():
    g = Grid(2, 96.0, 256)
    u = g.gaussian(1.0, 3.0)
    prof = build_profile()
    reps = {R: biharmonic_bound_A2(u, RescaledCutoff(prof, R), 0.8) for R in (4.0, 8.0)}
    assert reps[8.0]["rhs_bound"] / reps[4.0]["rhs_bound"] == pytest.approx(2 ** -1.6, rel=1e-3)
    for R, rep in reps.items():
        assert rep["lhs"] <= biharmonic_bound_explicit(RescaledCutoff(prof, R), 0.8, 2, u.mass())


def test_tail_vanishes_inside_core(grid, cut4):
    assert tail_nonlinear(grid.gaussian(1.0, 0.4), cut4, P) == pytest.approx(0.0, abs=1e-14)


def test_energy_enters_identity(grid, cut4):
    u = 0.5 * grid.gaussian(1.0, 1.0)
    rep = virial_rhs_general(u, cut4, P)
    assert rep.energy == pytest.approx(energy(u, P), rel=1e-12)


def test_shared_pairs_match_single_cutoff_evaluations(grid):
    u, _ = boosted(grid, (0.7, -0.3), (1.5, 0.5), width=1.2)
    u = grid.field(u.values * (1.0 + 0.3 * np.cos(grid.coords[0])))
    cuts = {R: RescaledCutoff(build_profile(), R) for R in (1.0, 2.0, 4.0)}
    pairs = virial_pairs(u, cuts, P)
    for R, c in cuts.items():
        m, d = pairs[R]
        assert m == pytest.approx(localized_virial(u, c), rel=1e-12, abs=1e-14)
        assert d == pytest.approx(direct_derivative(u, c, P), rel=1e-10)
    assert math.isnan(virial_pairs(u, cuts)[1.0][1])
