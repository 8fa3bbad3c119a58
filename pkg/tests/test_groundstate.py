import dataclasses
import math

import numpy as np
import pytest

from fracvirial import groundstate as gs
from fracvirial.errors import BoxSizeError, DomainError
from fracvirial.fracops import FracParams, Grid, energy

P2 = FracParams(0.8, 1.0, 2)


@pytest.fixture(scope="module")
def q2():
    return gs.solve_ground_state(P2, Grid(2, 64.0, 1024))


@pytest.fixture(scope="module")
def q1():
    return gs.solve_ground_state(FracParams(0.5, 0.5, 1), Grid(1, 4096.0, 2 ** 16), tol=1e-11)


def test_half_wave_soliton_matches_closed_form(q1):
    x = q1.profile.grid.axis
    # truncation to a 4096 box and the slow 1/x^2 tail limit agreement here
    assert np.max(np.abs(q1.profile.values.real - 2.0 / (1.0 + x * x))) <= 1e-4
    r1, r2 = gs.pohozaev_residuals(q1)
    assert abs(r1) <= 1e-5 and abs(r2) <= 1e-5


def test_closed_form_norms_of_half_wave_soliton(q1):
    # ||Q||^2 = 2 pi, ||Q||_3^3 = 3 pi, ||D^(1/2) Q||^2 = pi for Q = 2/(1+x^2)
    assert q1.mass == pytest.approx(2 * math.pi, rel=1e-3)
    assert q1.lp_norm == pytest.approx(3 * math.pi, rel=1e-3)
    assert q1.grad_norm_sq == pytest.approx(math.pi, rel=1e-3)


def test_2d_ground_state_pohozaev_and_shape(q2):
    r1, r2 = gs.pohozaev_residuals(q2)
    assert abs(r1) <= 1e-6 and abs(r2) <= 1e-6
    assert gs.is_positive_and_decreasing(q2)


def test_scaled_ground_state_is_detected(q2):
    lam = 1.1
    fake = dataclasses.replace(q2, grad_norm_sq=lam ** 2 * q2.grad_norm_sq, mass=lam ** 2 * q2.mass,
                               lp_norm=lam ** q2.params.p * q2.lp_norm)
    r1, _ = gs.pohozaev_residuals(fake)
    assert abs(r1) > 1e-2


def test_gn_constant_is_optimal(q2):
    c = gs.gn_constant(q2)
    rng = np.random.default_rng(11)
    g = q2.profile.grid
    for _ in range(200):
        u = g.random_bandlimited(rng, band=rng.uniform(0.5, 3.0), real=bool(rng.integers(2)))
        assert gs.gn_quotient(u, P2) <= c * (1 + 1e-3)


def test_gn_exponents_add_up():
    e1 = P2.sigma * P2.dim / P2.s
    assert e1 + (P2.p - e1) == P2.p


def test_k_three_ways_and_critical_value(q2):
    th = gs.thresholds(q2)
    assert th.spread <= 1e-4
    y, f = gs.critical_point_numeric(th, P2, q2.mass)
    assert y == pytest.approx(th.y_max, rel=1e-8)
    target = P2.s_c / P2.dim * y * y
    assert abs(f - target) <= 1e-10 * abs(target)


def test_threshold_function_shape(q2):
    th = gs.thresholds(q2)
    assert gs.threshold_function(0.0, q2.mass, th, P2) == 0.0
    h = 1e-6
    assert gs.threshold_function(h, q2.mass, th, P2) / h == pytest.approx(0.0, abs=1e-5)
    ys = th.y_max * np.linspace(1.01, 3.0, 50)
    assert np.all(np.diff(gs.threshold_function(ys, q2.mass, th, P2), 2) < 0)


def test_k_is_mass_power_when_mass_critical():
    q = gs.solve_ground_state(FracParams(0.5, 1.0, 1), Grid(1, 2048.0, 2 ** 16))
    t = gs.k_constant(q.params, gs.gn_constant(q), q)
    assert t.k_energy_mass == pytest.approx(q.mass ** 0.25)


def test_criterion_cases(q2):
    g = q2.profile.grid
    neg = 2.0 * q2.profile
    assert energy(neg, P2) < 0
    assert gs.check_blowup_criterion(neg, P2, q2).case == gs.NEGATIVE_ENERGY
    assert gs.check_blowup_criterion(q2.profile, P2, q2).case == gs.NOT_SATISFIED
    u = 1.05 * q2.profile
    v = g.field(np.exp(0.7j) * u.values)
    a, b = gs.check_blowup_criterion(u, P2, q2), gs.check_blowup_criterion(v, P2, q2)
    assert a.case == b.case
    assert a.grad_lhs == pytest.approx(b.grad_lhs, rel=1e-12)


def test_criterion_rejects_subcritical(q2):
    with pytest.raises(DomainError):
        gs.check_blowup_criterion(q2.profile, FracParams(0.8, 0.5, 2), q2)


def test_small_box_rejected():
    with pytest.raises(BoxSizeError):
        gs.solve_ground_state(P2, Grid(2, 32.0, 256))


def test_sobolev_optimizer_value_and_identity():
    p = FracParams(0.8, 1.6 / 0.4, 2)  # sigma = 2s/(N - 2s) gives s_c = s
    g = Grid(2, 64.0, 512)
    Q = gs.sobolev_optimizer(None, 1.0, None, g, p)
    c = g.points // 2
    assert Q.profile.values[c, c].real == pytest.approx(Q.lam * 1.0 ** -(2 - 1.6))
    checks = gs.sobolev_checks(Q)
    assert checks["identity_residual"] <= 1e-3
    assert checks["k_residual"] <= 1e-3
    # N > 4s fails at (2, 0.8): Q decays like |x|^-(N - 2s) and has infinite mass
    assert checks["l2_member"] is False
    assert checks["l2_member_from_decay"] is False
