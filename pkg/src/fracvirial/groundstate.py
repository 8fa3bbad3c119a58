"""Ground states, Gagliardo-Nirenberg and Sobolev constants, blowup thresholds.

Ground states solve (-Delta)^s Q + Q - Q^(2 sigma + 1) = 0. They are computed
by Petviashvili iteration on the periodic box. All threshold products are
formed in log space so no power of a negative or tiny number is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import integrate, optimize, special

from .errors import BoxSizeError, ConsistencyError, ConvergenceError, DomainError, ProjectionError
from .fracops import _WORKERS, FieldOnGrid, FracParams, Grid, energy, frac_multiplier, frac_seminorm

BOUNDARY_MASS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GroundState:
    profile: FieldOnGrid
    params: FracParams
    grad_norm_sq: float
    mass: float
    lp_norm: float          # ||Q||_{2 sigma + 2}^{2 sigma + 2}
    energy: float
    residual: float         # sup-norm of the equation residual
    iterations: int
    gamma: float            # last Petviashvili stabilizing factor
    boundary_mass: float
    history: list = field(default_factory=list, repr=False)

    @property
    def grad_norm(self) -> float:
        return math.sqrt(self.grad_norm_sq)


def _norms(u: FieldOnGrid, p: FracParams):
    return frac_seminorm(u, p.s) ** 2, u.mass(), u.lp_power(p.p)


def solve_ground_state(p: FracParams, grid: Grid, tol: float = 1e-10, max_iter: int = 5000,
                       stall_window: int = 50, amplitude: float = 1.5, width: float = 1.0) -> GroundState:
    """Petviashvili iteration Q <- gamma^((2 sigma+1)/(2 sigma)) ((-Delta)^s + 1)^{-1} Q^(2 sigma+1).

    gamma = <Q, (L+1) Q> / <Q, Q^(2 sigma+1)>. Starts from
    amplitude * exp(-|x|^2 / width^2) and stops when the sup-norm residual of
    the equation falls below tol.

    Raises DomainError unless s_c < s, ConvergenceError if the residual fails
    to decrease over stall_window steps or max_iter is hit, ProjectionError
    if the iterate develops negative values, and BoxSizeError if more than
    1e-8 of the mass sits in the outer tenth of the box.
    """
    if p.dim != grid.dim:
        raise DomainError(f"params dim {p.dim} does not match grid dim {grid.dim}")
    if not p.s_c < p.s:
        raise DomainError(f"ground states need s_c < s, got s_c = {p.s_c:g}, s = {p.s}")
    shape = grid.shape
    # rfft layout keeps indices 0..M/2 of the last axis; index M/2 is the Nyquist mode
    half = tuple(slice(None) for _ in range(grid.dim - 1)) + (slice(0, grid.points // 2 + 1),)
    symbol = frac_multiplier(grid, p.s)[half] + 1.0
    expo = (2.0 * p.sigma + 1.0) / (2.0 * p.sigma)
    q = amplitude * np.exp(-grid.radius ** 2 / width ** 2)
    history = []
    best = math.inf
    best_at = 0
    gamma = math.nan
    for it in range(max_iter + 1):
        nl = np.abs(q) ** (2.0 * p.sigma) * q
        qh = sfft.rfftn(q, workers=_WORKERS)
        lq = sfft.irfftn(symbol * qh, s=shape, workers=_WORKERS)
        res = float(np.max(np.abs(lq - nl)))
        history.append(res)
        if not math.isfinite(res):
            raise ConvergenceError(f"Petviashvili iterate became non-finite at step {it}")
        if res < tol:
            break
        if res < best * (1.0 - 1e-3):
            best, best_at = res, it
        elif it - best_at >= stall_window:
            raise ConvergenceError(
                f"Petviashvili residual stalled at {best:.3e} for {stall_window} steps (tol {tol:g})")
        gamma = float(np.sum(q * lq) / np.sum(q * nl))
        if not gamma > 0:
            raise ConvergenceError(f"stabilizing factor lost positivity: {gamma:g}")
        q = gamma ** expo * sfft.irfftn(sfft.rfftn(nl, workers=_WORKERS) / symbol, s=shape, workers=_WORKERS)
        qmin = float(q.min())
        if qmin < -1e-10 * float(q.max()):
            raise ProjectionError(f"negative values in Petviashvili iterate at step {it}: min {qmin:.3e}")
    else:
        raise ConvergenceError(f"Petviashvili did not reach tol {tol:g} in {max_iter} steps (residual {res:.3e})")
    u = grid.field(q)
    bm = u.boundary_mass_fraction()
    if bm > BOUNDARY_MASS_TOL:
        raise BoxSizeError(f"ground state has mass fraction {bm:.2e} in the outer tenth of the box; enlarge L")
    a, b, c = _norms(u, p)
    return GroundState(u, p, a, b, c, energy(u, p), res, it, gamma, bm, history)


def is_positive_and_decreasing(Q: GroundState, rtol: float = 1e-12) -> bool:
    """Positive everywhere and nonincreasing along the positive first axis.

    The outer tenth of the box is skipped: there the periodic image meets
    itself and the sampled profile has a flat minimum at x = L.
    """
    vals = Q.profile.values.real
    if vals.min() <= 0:
        return False
    g = Q.profile.grid
    centre = (g.points // 2,) * (g.dim - 1)
    ray = vals[(slice(g.points // 2, None),) + centre]
    x = g.axis[g.points // 2:]
    ray = ray[x <= 0.9 * g.half_length]
    return bool(np.all(np.diff(ray) <= rtol * ray.max()))


def pohozaev_residuals(Q: GroundState, relative: bool = True):
    """(r1, r2) from pairing the equation with Q and with x . grad Q.

    r1 = A + B - C, r2 = ((2s-N)/2) A - (N/2) B + (N/(2 sigma+2)) C with
    A = ||(-Delta)^(s/2) Q||^2, B = ||Q||^2, C = ||Q||_p^p. Relative residuals
    divide by C.
    """
    p = Q.params
    a, b, c = Q.grad_norm_sq, Q.mass, Q.lp_norm
    N = p.dim
    r1 = a + b - c
    r2 = (2 * p.s - N) / 2.0 * a - N / 2.0 * b + N / p.p * c
    if relative:
        return r1 / c, r2 / c
    return r1, r2


def gn_quotient(u: FieldOnGrid, p: FracParams) -> float:
    """||u||_p^p / (||(-Delta)^(s/2) u||^(sigma N/s) ||u||^(2 sigma + 2 - sigma N/s))."""
    a, b, c = _norms(u, p)
    e1 = p.sigma * p.dim / p.s
    e2 = p.p - e1
    return c / (a ** (e1 / 2.0) * b ** (e2 / 2.0))


def gn_constant(Q: GroundState) -> float:
    """Best Gagliardo-Nirenberg constant, attained at the ground state."""
    p = Q.params
    if not p.s_c < p.s:
        raise DomainError("GN constant needs s_c < s")
    e1 = p.sigma * p.dim / p.s
    e2 = p.p - e1
    return Q.lp_norm / (Q.grad_norm_sq ** (e1 / 2.0) * Q.mass ** (e2 / 2.0))


@dataclass(frozen=True)
class Thresholds:
    c_gn: float
    k_const: float          # from the GN constant
    k_norms: float          # ||(-Delta)^(s/2) Q||^s_c ||Q||^(s - s_c)
    k_energy_mass: float    # (s_c/N)^(-s_c/2) E^(s_c/2) M^((s - s_c)/2)
    spread: float
    y_max: float = math.nan
    f_at_max: float = math.nan
    mass_ref: float = math.nan


def k_constant(p: FracParams, c_gn: float, Q: GroundState, tol: float = 1e-4) -> Thresholds:
    """K computed three ways; raises ConsistencyError if they spread beyond tol (relative)."""
    sc = p.s_c
    k1 = (2.0 * p.s * (p.sigma + 1.0) / (p.sigma * p.dim * c_gn)) ** (p.s / (2.0 * p.sigma))
    k2 = math.exp(sc / 2.0 * math.log(Q.grad_norm_sq) + (p.s - sc) / 2.0 * math.log(Q.mass))
    if sc > 0:
        k3 = math.exp(-sc / 2.0 * math.log(sc / p.dim) + sc / 2.0 * math.log(Q.energy)
                      + (p.s - sc) / 2.0 * math.log(Q.mass))
    else:
        k3 = Q.mass ** (p.s / 2.0)
    ks = np.array([k1, k2, k3])
    spread = float((ks.max() - ks.min()) / ks.mean())
    if spread > tol:
        raise ConsistencyError(f"K disagrees across routes: {k1:.10g}, {k2:.10g}, {k3:.10g} (spread {spread:.2e})")
    return Thresholds(c_gn=c_gn, k_const=k1, k_norms=k2, k_energy_mass=k3, spread=spread)


def threshold_function(y, mass0: float, t: Thresholds, p: FracParams):
    """F(y) = y^2/2 - C/(2 sigma+2) M0^((sigma/s)(s - s_c)) y^(sigma N/s)."""
    if not p.s_c > 0:
        raise DomainError(f"threshold function needs s_c > 0, got {p.s_c:g}")
    y = np.asarray(y, dtype=float)
    coef = t.c_gn / p.p * mass0 ** (p.sigma / p.s * (p.s - p.s_c))
    return 0.5 * y ** 2 - coef * y ** (p.sigma * p.dim / p.s)


def critical_point(t: Thresholds, p: FracParams, mass0: float):
    """(y_max, F(y_max)) with y_max = K^(1/s_c) M0^(-(s - s_c)/(2 s_c))."""
    if not p.s_c > 0:
        raise DomainError(f"critical point needs s_c > 0, got {p.s_c:g}")
    y = t.k_const ** (1.0 / p.s_c) * mass0 ** (-(p.s - p.s_c) / (2.0 * p.s_c))
    return y, float(threshold_function(y, mass0, t, p))


def critical_point_numeric(t: Thresholds, p: FracParams, mass0: float, y_guess: float = 1.0):
    """Maximize F by golden-section search, independently of the closed form.

    A coarse search on F brackets the maximizer y_c. F is flat there, so the
    fine search works on F(y_c (1+e)) - F(y_c) written with expm1/log1p,
    which keeps the differences accurate far below sqrt(machine eps).
    """
    a = p.sigma * p.dim / p.s
    coef = t.c_gn / p.p * mass0 ** (p.sigma / p.s * (p.s - p.s_c))

    def neg_f(y):
        return -float(threshold_function(y, mass0, t, p))

    lo, hi = y_guess, y_guess
    while neg_f(lo / 2) < neg_f(lo):
        lo /= 2
    while neg_f(hi * 2) < neg_f(hi):
        hi *= 2
    coarse = optimize.minimize_scalar(neg_f, bracket=(lo / 2, lo, hi * 2) if lo < hi else
                                      (lo / 2, lo, lo * 2), method="golden")
    yc = float(coarse.x)

    def neg_df(e):
        le = math.log1p(e)
        return -(0.5 * yc ** 2 * math.expm1(2.0 * le) - coef * yc ** a * math.expm1(a * le))

    fine = optimize.minimize_scalar(neg_df, bracket=(-0.01, 0.0, 0.01), method="golden", tol=1e-14)
    y = yc * (1.0 + float(fine.x))
    return y, float(threshold_function(y, mass0, t, p))


def thresholds(Q: GroundState, mass0: float | None = None, tol: float = 1e-4) -> Thresholds:
    """All constants of the ground state, with y_max and F(y_max) at mass0 (default M[Q])."""
    p = Q.params
    t = k_constant(p, gn_constant(Q), Q, tol)
    m0 = Q.mass if mass0 is None else mass0
    if p.s_c > 0:
        y, f = critical_point(t, p, m0)
        return Thresholds(**{**t.__dict__, "y_max": y, "f_at_max": f, "mass_ref": m0})
    return Thresholds(**{**t.__dict__, "mass_ref": m0})


# --- blowup criterion --------------------------------------------------------

NEGATIVE_ENERGY = "NegativeEnergy"
ABOVE_THRESHOLD = "AboveThreshold"
L2_CRITICAL_NEGATIVE_ENERGY = "L2CriticalNegativeEnergy"
NOT_SATISFIED = "NotSatisfied"


@dataclass(frozen=True)
class CriterionVerdict:
    case: str
    energy: float
    energy_lhs: float       # log of E^s_c M^(s - s_c) for the data
    energy_rhs: float       # same for the ground state
    grad_lhs: float         # log of ||D^s u|| ^s_c ||u||^(s - s_c) for the data
    grad_rhs: float


@dataclass(frozen=True, eq=False)
class SobolevOptimizer:
    """Energy-critical ground state lambda (mu^2 + |x - a|^2)^(-(N - 2s)/2)."""

    profile: FieldOnGrid
    params: FracParams
    lam: float
    mu: float
    grad_norm_sq: float
    lp_norm: float
    energy: float
    mass: float             # math.inf unless N > 4s

    @property
    def grad_norm(self) -> float:
        return math.sqrt(self.grad_norm_sq)


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def check_blowup_criterion(u0: FieldOnGrid, p: FracParams, Q) -> CriterionVerdict:
    """Classify data against the blowup criteria.

    NegativeEnergy if E[u0] < 0 (L2CriticalNegativeEnergy when s_c = 0).
    Otherwise, for 0 < s_c <= s, AboveThreshold needs both
    E^s_c M^(s - s_c) < E[Q]^s_c M[Q]^(s - s_c) and
    ||D^s u0||^s_c ||u0||^(s - s_c) > the same product for Q. At s_c = s the
    mass factors are dropped outright; for s_c = 0 only negative energy counts.
    """
    sc = p.s_c
    if sc < -1e-12:
        raise DomainError(f"criterion needs s_c >= 0, got s_c = {sc:g}")
    if sc > p.s + 1e-12:
        raise DomainError(f"criterion needs s_c <= s, got s_c = {sc:g} > s = {p.s}")
    e0 = energy(u0, p)
    m0 = u0.mass()
    g0 = frac_seminorm(u0, p.s)
    energy_critical = abs(sc - p.s) <= 1e-12
    mass_critical = abs(sc) <= 1e-12
    eq_ = Q.energy
    mq = Q.mass
    if energy_critical:
        lhs_e = sc * _log(e0) if e0 >= 0 else math.nan
        rhs_e = sc * _log(eq_)
        lhs_g = sc * _log(g0)
        rhs_g = sc * _log(Q.grad_norm)
    else:
        lhs_e = sc * _log(e0) + (p.s - sc) * _log(m0) if e0 >= 0 else math.nan
        rhs_e = sc * _log(eq_) + (p.s - sc) * _log(mq)
        lhs_g = sc * _log(g0) + (p.s - sc) * 0.5 * _log(m0)
        rhs_g = sc * _log(Q.grad_norm) + (p.s - sc) * 0.5 * _log(mq)
    if e0 < 0:
        case = L2_CRITICAL_NEGATIVE_ENERGY if mass_critical else NEGATIVE_ENERGY
    elif mass_critical:
        case = NOT_SATISFIED
    elif lhs_e < rhs_e and lhs_g > rhs_g:
        case = ABOVE_THRESHOLD
    else:
        case = NOT_SATISFIED
    return CriterionVerdict(case, e0, lhs_e, rhs_e, lhs_g, rhs_g)


# --- energy-critical optimizer ---------------------------------------------

def _sobolev_lambda(N: int, s: float, mu: float) -> float:
    c = 2.0 ** (2 * s) * math.exp(special.gammaln((N + 2 * s) / 2) - special.gammaln((N - 2 * s) / 2))
    return (c * mu ** (2 * s)) ** ((N - 2 * s) / (4 * s))


def _bracket_integral(N: int, mu: float, a: float) -> float:
    """int_{R^N} (mu^2 + |x|^2)^(-a) dx = pi^(N/2) Gamma(a - N/2)/Gamma(a) mu^(N - 2a), a > N/2."""
    if a <= N / 2:
        return math.inf
    return math.pi ** (N / 2) * math.exp(special.gammaln(a - N / 2) - special.gammaln(a)) * mu ** (N - 2 * a)


def _sphere_area(N: int) -> float:
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def sobolev_seminorm_sq(N: int, s: float, lam: float, mu: float) -> float:
    """||(-Delta)^(s/2) Q||^2 by radial quadrature of |xi|^(2s) |Q^(xi)|^2.

    Q^(xi) = lam (2 pi)^(N/2) 2^(1-nu)/Gamma(nu) (|xi|/mu)^(-s) K_s(mu |xi|)
    with nu = (N - 2s)/2.
    """
    nu = (N - 2 * s) / 2
    pref = lam * (2 * math.pi) ** (N / 2) * 2 ** (1 - nu) / math.gamma(nu) * mu ** s

    def integrand(k):
        # |xi|^(2s) |Q^|^2 k^(N-1) with the |xi|^(2s) cancelling (|xi|/mu)^(-2s)
        return pref ** 2 * special.kv(s, mu * k) ** 2 * k ** (N - 1)

    val = 0.0
    for a, b in ((0.0, 1.0 / mu), (1.0 / mu, 50.0 / mu)):
        part, _ = integrate.quad(integrand, a, b, limit=200, epsabs=0, epsrel=1e-13)
        val += part
    return _sphere_area(N) * val / (2 * math.pi) ** N


def sobolev_optimizer(lam: float | None, mu: float, a, grid: Grid, p: FracParams) -> SobolevOptimizer:
    """Sample lam (mu^2 + |x - a|^2)^(-(N-2s)/2); lam=None picks the value solving the equation.

    Needs N > 2s and s_c = s.
    """
    N, s = p.dim, p.s
    if not N > 2 * s:
        raise DomainError(f"optimizer needs N > 2s, got N={N}, s={s}")
    if abs(p.s_c - s) > 1e-12:
        raise DomainError(f"optimizer needs s_c = s (sigma = 2s/(N-2s)), got s_c = {p.s_c:g}")
    if lam is None:
        lam = _sobolev_lambda(N, s, mu)
    a = np.zeros(N) if a is None else np.atleast_1d(np.asarray(a, float))
    r2 = sum((x - aj) ** 2 for x, aj in zip(grid.coords, a))
    vals = lam * (mu ** 2 + r2) ** (-(N - 2 * s) / 2)
    u = grid.field(vals)
    pstar = p.p  # 2N/(N-2s)
    gsq = sobolev_seminorm_sq(N, s, lam, mu)
    lp = lam ** pstar * _bracket_integral(N, mu, N)
    mass = lam ** 2 * _bracket_integral(N, mu, N - 2 * s)
    e = 0.5 * gsq - lp / pstar
    return SobolevOptimizer(u, p, lam, mu, gsq, lp, e, mass)


def sobolev_checks(Q: SobolevOptimizer, tail_radius: float | None = None) -> dict:
    """Check ||D^s Q||^2 = ||Q||_p^p and K = ||D^s Q||^s = (s/N)^(-s/2) E^(s/2).

    The L^p power is also computed from the grid samples inside the disc
    |x - a| < tail_radius plus the exact integral outside it. The decay
    exponent of Q is measured along the first axis and compared with the
    L^2 membership condition N > 4s.
    """
    p = Q.params
    N, s = p.dim, p.s
    g = Q.profile.grid
    rho = 0.9 * g.half_length if tail_radius is None else tail_radius
    r = g.radius
    inside = r < rho
    grid_part = g.cell_volume * float(np.sum(np.abs(Q.profile.values[inside]) ** p.p))
    # int_{r > rho} lam^p (mu^2 + r^2)^(-N) dx, radial quadrature
    tail, _ = integrate.quad(lambda t: Q.lam ** p.p * (Q.mu ** 2 + t * t) ** (-N) * t ** (N - 1),
                             rho, math.inf, epsrel=1e-12)
    lp_grid = grid_part + _sphere_area(N) * tail
    identity_residual = abs(Q.grad_norm_sq - Q.lp_norm) / Q.lp_norm
    grid_residual = abs(Q.grad_norm_sq - lp_grid) / Q.lp_norm
    k_norm = Q.grad_norm_sq ** (s / 2)
    k_energy = (s / N) ** (-s / 2) * Q.energy ** (s / 2)
    centre = (g.points // 2,) * (N - 1)
    ray = np.abs(Q.profile.values[(slice(g.points // 2, None),) + centre]) if N > 1 else \
        np.abs(Q.profile.values[g.points // 2:])
    x = g.axis[g.points // 2:]
    sel = (x > 0.2 * g.half_length) & (x < 0.8 * g.half_length)
    slope = float(np.polyfit(np.log(x[sel]), np.log(ray[sel]), 1)[0]) if sel.sum() > 2 else math.nan
    return {
        "seminorm_sq": Q.grad_norm_sq,
        "lp_power": Q.lp_norm,
        "lp_power_grid": lp_grid,
        "identity_residual": identity_residual,
        "grid_residual": grid_residual,
        "k_norm": k_norm,
        "k_energy": k_energy,
        "k_residual": abs(k_norm - k_energy) / k_norm,
        "decay_exponent": slope,
        "expected_decay_exponent": -(N - 2 * s),
        "l2_member": bool(N > 4 * s),
        "l2_member_from_decay": bool(2 * slope < -N),
        "mass": Q.mass,
    }
