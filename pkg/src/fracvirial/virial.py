"""Localized virial M_phi[u] = 2 Im <u, grad phi . grad u> and its time derivative.

The time derivative along i u_t = (-Delta)^s u - |u|^(2 sigma) u is assembled
from the resolvent fields u_m = c_s (-Delta + m)^{-1} u:

    4 int m^s int d_k conj(u_m) H_kl d_l u_m    (Hessian term)
  -   int m^s int Delta^2 phi |u_m|^2            (biharmonic term)
  - 2 sigma/(sigma+1) int Delta phi |u|^(2 sigma+2)   (nonlinear term)

The m-integrals share one pass over the quadrature nodes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .cutoff import RescaledCutoff, c_eta, eval_on_grid
from .errors import DomainError, InputError, QuadratureError, SymmetryError
from .fracops import (_WORKERS, FieldOnGrid, FracParams, Grid, MQuadrature, c_s, energy,
                      frac_laplacian, frac_seminorm, gradient)

_BATCH = 8


@lru_cache(maxsize=32)
def cutoff_fields(c: RescaledCutoff, grid: Grid):
    return eval_on_grid(c, grid)


def localized_virial(u: FieldOnGrid, c: RescaledCutoff) -> float:
    """2 Im <u, grad phi_R . grad u> with spectral gradients."""
    f = cutoff_fields(c, u.grid)
    grads = gradient(u)
    flux = sum(gk * dk for gk, dk in zip(f.grad, grads))
    return 2.0 * u.inner(flux).imag


def _virial_operator(u: FieldOnGrid, grad_phi) -> np.ndarray:
    """B u = (G.D + D.G) u with spectral D and G = grad phi sampled."""
    g = u.grid
    uh = u.fft()
    out = np.zeros(g.shape, dtype=complex)
    for gk, kk in zip(grad_phi, g.wavevectors):
        out += gk * sfft.ifftn(1j * kk * uh, workers=_WORKERS)
        out += sfft.ifftn(1j * kk * sfft.fftn(gk * u.values, workers=_WORKERS), workers=_WORKERS)
    return out


def direct_derivative(u: FieldOnGrid, c: RescaledCutoff, p: FracParams) -> float:
    """Exact time derivative of M_phi for the semi-discrete equation: 2 Re <Hu, Bu>.

    H u = (-Delta)^s u - |u|^(2 sigma) u and B = G.D + D.G is anti-Hermitian,
    so this is the derivative of -i <u, B u> along u_t = -i H u.
    """
    f = cutoff_fields(c, u.grid)
    hu = frac_laplacian(u, p.s).values - np.abs(u.values) ** (2 * p.sigma) * u.values
    bu = _virial_operator(u, f.grad)
    return 2.0 * (u.grid.cell_volume * np.vdot(hu, bu)).real


def virial_pairs(u: FieldOnGrid, cutoffs: dict, p: FracParams | None = None) -> dict:
    """(M_phi, dM_phi/dt) for several cutoffs with the transforms shared.

    Uses <Hu, D_k(g_k u)> = -<D_k Hu, g_k u>, exact because the spectral
    derivative is anti-Hermitian on the torus. Without p the derivative is nan.
    """
    g = u.grid
    grads = gradient(u)
    hu = hgrads = None
    if p is not None:
        hu = frac_laplacian(u, p.s).values - np.abs(u.values) ** (2 * p.sigma) * u.values
        hgrads = gradient(g.field(hu))
    out = {}
    for key, c in cutoffs.items():
        f = cutoff_fields(c, g)
        flux = sum(gk * dk for gk, dk in zip(f.grad, grads))
        m = 2.0 * u.inner(flux).imag
        d = math.nan
        if p is not None:
            val = np.vdot(hu, flux) - sum(np.vdot(hk, gk * u.values) for gk, hk in zip(f.grad, hgrads))
            d = 2.0 * (g.cell_volume * val).real
        out[key] = (m, d)
    return out


def full_virial_rhs(u: FieldOnGrid, p: FracParams, energy_value: float) -> float:
    """4 sigma N E - 2 (sigma N - 2s) ||(-Delta)^(s/2) u||^2."""
    return 4.0 * p.sigma * p.dim * energy_value - 2.0 * p.delta * frac_seminorm(u, p.s) ** 2


def m_integrals(u: FieldOnGrid, s: float, q: MQuadrature, grad_weights=None, hessian=None,
                bilaplacian_of=None):
    """One pass over the m-nodes computing integrals of m^s times

    * int w |grad u_m|^2 dx for each w in grad_weights,
    * int d_k conj(u_m) H_kl d_l u_m dx if a Hessian tuple is given,
    * int Delta^2 phi |u_m|^2 dx if bilaplacian_of = Delta phi is given.

    The last one is evaluated as int Delta phi Delta |u_m|^2 with
    Delta |u_m|^2 = 2 Re(conj(u_m) Delta u_m) + 2 |grad u_m|^2, which holds
    exactly on the torus. Delta phi is C^1 while Delta^2 phi jumps where the
    profile pieces meet, so this form keeps the Riemann sum high order.
    Results are returned in a dict keyed by weight name, "hessian" and "bilap".
    """
    g = u.grid
    grad_weights = dict(grad_weights or {})
    rule = q.rule(*g.spectral_range, s)
    # sqrt(w m^s) is folded into each resolvent so no product overflows
    sw = np.exp(0.5 * rule.log_weights(s))
    m = rule.m
    cs = c_s(s)
    uh = u.fft()
    vol = g.cell_volume
    if bilaplacian_of is not None:
        grad_weights["_lap"] = bilaplacian_of
    totals = {k: 0.0 for k in grad_weights}
    totals["hessian"] = 0.0
    totals["bilap"] = 0.0
    axes = tuple(range(1, g.dim + 1))
    k2 = g.ksq
    shape = (-1,) + (1,) * g.dim
    for start in range(0, len(m), _BATCH):
        mb = m[start:start + _BATCH]
        swb = sw[start:start + _BATCH]
        res = cs * uh[None] * swb.reshape(shape) / (k2[None] + mb.reshape(shape))
        grads = [sfft.ifftn(1j * kk[None] * res, axes=axes, workers=_WORKERS) for kk in g.wavevectors]
        mag2 = sum(np.abs(d) ** 2 for d in grads)
        for key, wt in grad_weights.items():
            totals[key] += _accumulate(vol * np.tensordot(mag2, wt, axes=g.dim), start)
        if hessian is not None:
            dens = 0.0
            for k in range(g.dim):
                for l in range(g.dim):
                    dens = dens + (np.conj(grads[k]) * hessian[k][l] * grads[l]).real
            totals["hessian"] += _accumulate(vol * np.sum(dens, axis=axes), start)
        if bilaplacian_of is not None:
            field = sfft.ifftn(res, axes=axes, workers=_WORKERS)
            lap = sfft.ifftn(-k2[None] * res, axes=axes, workers=_WORKERS)
            dens = 2.0 * (np.conj(field) * lap).real
            totals["bilap"] += _accumulate(vol * np.tensordot(dens, bilaplacian_of, axes=g.dim), start)
    if bilaplacian_of is not None:
        totals["bilap"] += 2.0 * totals.pop("_lap")
    return totals


def _accumulate(vals, start) -> float:
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise QuadratureError(f"non-finite integrand at m-node {start + bad}", node_index=start + bad)
    return float(np.sum(vals))


@dataclass(frozen=True)
class VirialReport:
    m_phi: float
    hessian_term: float
    biharmonic_term: float
    nonlinear_term: float
    rhs_total: float
    energy: float
    grad_norm_sq: float
    full_rhs: float
    direct_derivative: float
    hessian_term_radial: float
    psi1_integral: float
    psi2_pow_integral: float
    tail_lp: float
    mass: float
    nodes: int

    def as_dict(self) -> dict:
        return asdict(self)


def virial_rhs_general(u: FieldOnGrid, c: RescaledCutoff, p: FracParams, q: MQuadrature | None = None,
                       eta_power: float | None = None) -> VirialReport:
    """Evaluate M_phi[u] and the three terms of its time derivative.

    Also records the radial form 4 int m^s int phi'' |grad u_m|^2 of the
    Hessian term and the psi-weighted integrals used by the estimate
    decompositions (psi_2 raised to eta_power, default N/(2s)).
    """
    if not isinstance(u, FieldOnGrid):
        raise InputError("expected FieldOnGrid")
    if p.dim != u.grid.dim:
        raise DomainError(f"params dim {p.dim} does not match grid dim {u.grid.dim}")
    q = q or MQuadrature()
    f = cutoff_fields(c, u.grid)
    pow2 = p.dim / (2.0 * p.s) if eta_power is None else eta_power
    ints = m_integrals(
        u, p.s, q,
        grad_weights={"radial": f.d2, "psi1": f.psi1, "psi2pow": f.psi2 ** pow2},
        hessian=f.hessian,
        bilaplacian_of=f.laplacian,
    )
    hess = 4.0 * ints["hessian"]
    bilap = -ints["bilap"]
    absu = np.abs(u.values)
    lp = absu ** p.p
    vol = u.grid.cell_volume
    nonlin = -(2.0 * p.sigma / (p.sigma + 1.0)) * vol * float(np.sum(f.laplacian * lp))
    e = energy(u, p)
    g2 = frac_seminorm(u, p.s) ** 2
    rule = q.rule(*u.grid.spectral_range, p.s)
    return VirialReport(
        m_phi=localized_virial(u, c),
        hessian_term=hess,
        biharmonic_term=bilap,
        nonlinear_term=nonlin,
        rhs_total=hess + bilap + nonlin,
        energy=e,
        grad_norm_sq=g2,
        full_rhs=full_virial_rhs(u, p, e),
        direct_derivative=direct_derivative(u, c, p),
        hessian_term_radial=4.0 * ints["radial"],
        psi1_integral=ints["psi1"],
        psi2_pow_integral=ints["psi2pow"],
        tail_lp=vol * float(np.sum(f.psi2 * lp)),
        mass=u.mass(),
        nodes=len(rule),
    )


@dataclass(frozen=True)
class EstimateDecomposition:
    rhs_total: float
    core_identity: float
    localization_defect: float
    hessian_defect: float
    biharmonic_term: float
    tail_nonlinear: float
    identity_residual: float
    strauss_scale: float | None = None
    tail_ratio: float | None = None
    eps: float | None = None
    eta: float | None = None
    c_eta: float | None = None
    beta: float | None = None
    psi1_integral: float | None = None
    psi2_pow_integral: float | None = None
    margin_integral: float | None = None
    err_nonlinear: float | None = None
    err_biharmonic: float | None = None
    refined_bound: float | None = None
    error_scale: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _base_decomposition(rep: VirialReport, p: FracParams) -> dict:
    core = 4.0 * p.sigma * p.dim * rep.energy - 2.0 * p.delta * rep.grad_norm_sq
    defect = 4.0 * rep.psi1_integral
    tail = (2.0 * p.sigma / (p.sigma + 1.0)) * rep.tail_lp
    return dict(
        rhs_total=rep.rhs_total,
        core_identity=core,
        localization_defect=defect,
        hessian_defect=4.0 * p.s * rep.grad_norm_sq - rep.hessian_term,
        biharmonic_term=rep.biharmonic_term,
        tail_nonlinear=tail,
        identity_residual=rep.rhs_total - (core - defect + rep.biharmonic_term + tail),
    )


def radial_estimate_decomposition(u: FieldOnGrid, c: RescaledCutoff, p: FracParams,
                                  q: MQuadrature | None = None, eps: float = 0.1,
                                  report: VirialReport | None = None) -> EstimateDecomposition:
    """Split the virial derivative into core, localization defect, biharmonic and tail parts.

    rhs_total = core - localization_defect + biharmonic + tail_nonlinear,
    where the defect is 4 int m^s int (1 - phi_R'') |grad u_m|^2 >= 0. The
    identity is exact for radial u; identity_residual measures how far a
    non-radial field departs from it. The tail is compared with the scale
    R^(-sigma(N-1) + eps s) ||(-Delta)^(s/2) u||^(sigma/s + eps).
    """
    upper = (2.0 * p.s - 1.0) * p.sigma / p.s
    if not (0 < eps < upper):
        raise DomainError(f"eps must lie in (0, {upper:g}), got {eps}")
    rep = report or virial_rhs_general(u, c, p, q)
    parts = _base_decomposition(rep, p)
    gn = math.sqrt(rep.grad_norm_sq)
    scale = c.R ** (-p.sigma * (p.dim - 1) + eps * p.s) * gn ** (p.sigma / p.s + eps)
    ratio = parts["tail_nonlinear"] / scale if scale > 0 else 0.0
    return EstimateDecomposition(**parts, strauss_scale=scale, tail_ratio=ratio, eps=eps)


def refined_decomposition(u: FieldOnGrid, c: RescaledCutoff, p: FracParams, q: MQuadrature | None = None,
                          eta: float = 1.0, report: VirialReport | None = None) -> EstimateDecomposition:
    """L2-critical split: rhs_total = 8 s E - 4 (psi1 - c(eta) psi2pow) + err_nonlinear + err_biharmonic.

    psi1 = int m^s int psi_1 |grad u_m|^2, psi2pow = int m^s int psi_2^(N/2s) |grad u_m|^2.
    err_nonlinear is the part of the tail nonlinearity not absorbed by the
    c(eta) term. The bracket is nonnegative whenever the cutoff margin is.
    """
    if not p.l2_critical:
        raise DomainError(f"refined decomposition needs sigma = 2s/N, got sigma={p.sigma}, 2s/N={2 * p.s / p.dim}")
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    rep = report or virial_rhs_general(u, c, p, q)
    parts = _base_decomposition(rep, p)
    ce = c_eta(eta, p.s, p.dim)
    beta = 2.0 * p.s / (p.dim - 2.0 * p.s)
    margin = rep.psi1_integral - ce * rep.psi2_pow_integral
    err_nl = parts["tail_nonlinear"] - 4.0 * ce * rep.psi2_pow_integral
    bound = 8.0 * p.s * rep.energy - 4.0 * margin + err_nl + rep.biharmonic_term
    R = c.R
    scale = (1.0 + eta ** (-beta)) * R ** (-2.0 * p.s) + eta * (1.0 + R ** -2 + R ** -4)
    parts["identity_residual"] = rep.rhs_total - bound
    return EstimateDecomposition(**parts, eta=eta, c_eta=ce, beta=beta,
                                 psi1_integral=rep.psi1_integral, psi2_pow_integral=rep.psi2_pow_integral,
                                 margin_integral=margin, err_nonlinear=err_nl,
                                 err_biharmonic=rep.biharmonic_term, refined_bound=bound, error_scale=scale)


def radial_groups(grid: Grid):
    """Group grid points by exact squared lattice radius a^2 + b^2 (grid must be symmetric about 0)."""
    idx = np.arange(grid.points) - grid.points // 2
    lat = np.meshgrid(*([idx] * grid.dim), indexing="ij")
    return sum(a * a for a in lat)


def check_radial(u: FieldOnGrid, tol: float = 1e-8) -> float:
    """Largest spread of |u| among equal-radius lattice points, relative to max |u|.

    Raises SymmetryError above tol.
    """
    vals = u.values
    scale = float(np.max(np.abs(vals)))
    if scale == 0:
        return 0.0
    key = radial_groups(u.grid).ravel()
    order = np.argsort(key, kind="stable")
    k = key[order]
    v = vals.ravel()[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    spread = max(np.maximum.reduceat(v.real, starts) - np.minimum.reduceat(v.real, starts))
    spread = max(spread, max(np.maximum.reduceat(v.imag, starts) - np.minimum.reduceat(v.imag, starts)))
    rel = float(spread) / scale
    if rel > tol:
        raise SymmetryError(f"field is not radial: angular variation {rel:.3e} > {tol:g}")
    return rel


def strauss_ratio(u: FieldOnGrid, alpha: float) -> float:
    """sup_{x != 0} |x|^(N/2 - alpha) |u(x)| / ||(-Delta)^(alpha/2) u|| for radial u."""
    N = u.grid.dim
    if not (0.5 < alpha < N / 2.0):
        raise DomainError(f"alpha must lie in (1/2, N/2) = (0.5, {N / 2}), got {alpha}")
    check_radial(u)
    den = frac_seminorm(u, alpha)
    if den == 0:
        return 0.0
    r = u.grid.radius
    nz = r > 0
    return float(np.max(r[nz] ** (N / 2.0 - alpha) * np.abs(u.values[nz])) / den)


def virial_bound_A1(u: FieldOnGrid, c: RescaledCutoff) -> dict:
    """|M_phi[u]| against ||D^(1/2) u||^2 + ||u|| ||D^(1/2) u||."""
    lhs = abs(localized_virial(u, c))
    half = frac_seminorm(u, 0.5)
    rhs = half ** 2 + u.l2_norm() * half
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def biharmonic_bound_A2(u: FieldOnGrid, c: RescaledCutoff, s: float, q: MQuadrature | None = None) -> dict:
    """|int m^s int Delta^2 phi_R |u_m|^2| against ||Delta^2 phi_R||^s ||Delta phi_R||^(1-s) ||u||^2."""
    q = q or MQuadrature()
    f = cutoff_fields(c, u.grid)
    ints = m_integrals(u, s, q, bilaplacian_of=f.laplacian)
    lhs = abs(ints["bilap"])
    r = np.linspace(0.0, 12.0 * c.R, 20001)
    d = c.radial_data(r, u.grid.dim)
    rhs = np.max(np.abs(d["bilaplacian"])) ** s * np.max(np.abs(d["laplacian"])) ** (1 - s) * u.mass()
    return {"lhs": lhs, "rhs_bound": float(rhs), "ratio": lhs / rhs if rhs > 0 else 0.0}


def _laplacian_sups(c: RescaledCutoff, N: int):
    r = np.linspace(0.0, 10.5 * c.R, 40001)
    d = c.radial_data(r, N)
    return float(np.max(np.abs(d["laplacian"]))), float(np.max(np.abs(d["bilaplacian"])))


def biharmonic_bound_explicit(c: RescaledCutoff, s: float, N: int, mass: float) -> float:
    """Upper bound for |int m^s int Delta^2 phi_R |u_m|^2| from sup norms and ||u||^2 alone.

    Splits the m-integral at Lambda. Below it, after moving two derivatives
    onto |u_m|^2, uses ||Delta u_m|| <= c_s ||u||, ||grad u_m||^2 <= c_s^2 ||u||^2/(4m)
    and ||u_m|| <= c_s ||u||/m, so the integrand is at most (5/2) c_s^2 m^(s-1) sup|Delta phi| ||u||^2.
    Above it, uses ||u_m||^2 <= c_s^2 ||u||^2/m^2. Lambda minimizes the sum.
    """
    lap, bilap = _laplacian_sups(c, N)
    if bilap == 0 or lap == 0:
        return 0.0
    a = 2.5 * lap
    lam = bilap / a
    cs2 = math.sin(math.pi * s) / math.pi
    return cs2 * mass * (a * lam ** s / s + bilap * lam ** (s - 1.0) / (1.0 - s))


def tail_nonlinear(u: FieldOnGrid, c: RescaledCutoff, p: FracParams) -> float:
    """(2 sigma/(sigma+1)) int psi_2 |u|^(2 sigma + 2): the nonlinear part left outside the core."""
    f = cutoff_fields(c, u.grid)
    return (2.0 * p.sigma / (p.sigma + 1.0)) * u.grid.cell_volume * float(np.sum(f.psi2 * np.abs(u.values) ** p.p))
