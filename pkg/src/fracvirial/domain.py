"""Fractional NLS on an interval with the exterior Dirichlet fractional Laplacian.

The operator is the restriction of the Riesz-kernel integral
C_{1,s} p.v. int (u(x) - u(y)) |x - y|^(-1-2s) dy to functions vanishing
outside (a, b). On the uniform interior grid x_i = a + i h, i = 1..M, it is
discretized by the second-difference quadrature: the near-singular part
|y| < h uses the central second difference, the rest integrates the kernel
exactly against the piecewise-linear interpolant of u extended by zero. The
result is a symmetric Toeplitz matrix C_{1,s} h^(-2s) tau_|i-j|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import gamma

from .errors import DomainError, InputError, InstabilityError

# a conservation breach after this much growth of the gradient scale means
# the collapse has outrun the grid rather than the scheme going unstable
GROWTH_FOR_RESOLUTION_LOSS = 1.5


@dataclass(frozen=True)
class IntervalDomain:
    a: float
    b: float
    points: int

    def __post_init__(self):
        if not (self.a < 0 < self.b):
            raise DomainError(f"the interval ({self.a}, {self.b}) must contain 0 (star-shaped about the origin)")
        if int(self.points) != self.points or self.points < 32:
            raise InputError(f"need at least 32 interior points, got {self.points}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.points + 1)

    @property
    def x(self) -> np.ndarray:
        return self.a + self.h * np.arange(1, self.points + 1)


def riesz_constant(s: float) -> float:
    """C_{1,s} = s 4^s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s))."""
    return s * 4.0 ** s * gamma(s + 0.5) / (math.sqrt(math.pi) * gamma(1.0 - s))


def _kernel_antiderivatives(s: float):
    """G with G'' = z^(-1-2s) and its derivative G', up to linear terms."""
    if abs(s - 0.5) < 1e-12:
        return (lambda z: -np.log(z)), (lambda z: -1.0 / z)
    c = 1.0 / ((-2.0 * s) * (1.0 - 2.0 * s))
    return (lambda z: c * z ** (1.0 - 2.0 * s)), (lambda z: z ** (-2.0 * s) / (-2.0 * s))


def stencil(s: float, n: int) -> np.ndarray:
    """Dimensionless Toeplitz entries tau_0..tau_{n-1}."""
    G, dG = _kernel_antiderivatives(s)
    k = np.arange(2, max(n, 2) + 1, dtype=float)
    w = np.empty(max(n, 2) + 1)
    w[0] = 0.0
    w[1] = G(2.0) - G(1.0) - dG(1.0)
    w[2:] = G(k + 1.0) - 2.0 * G(k) + G(k - 1.0)
    tau = -w
    tau[0] = 2.0 / (2.0 - 2.0 * s) + 1.0 / s
    tau[1] -= 1.0 / (2.0 - 2.0 * s)
    return tau[:n]


@dataclass
class DirichletFracOperator:
    domain: IntervalDomain
    s: float
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def form(self, u: np.ndarray) -> float:
        """<u, L u> = h u^H A u."""
        return float(self.domain.h * np.real(np.vdot(u, self.matrix @ u)))

    def to_modes(self, u):
        return self.eigenvectors.T @ u

    def from_modes(self, c):
        return self.eigenvectors @ c


def assemble(domain: IntervalDomain, s: float) -> DirichletFracOperator:
    if not (0 < s < 1):
        raise DomainError(f"s must lie in (0, 1), got {s}")
    n = domain.points
    tau = stencil(s, n)
    A = riesz_constant(s) * domain.h ** (-2.0 * s) * linalg.toeplitz(tau)
    A = 0.5 * (A + A.T)
    lam, vec = linalg.eigh(A)
    if lam[0] <= 0:
        raise DomainError(f"assembled operator is not positive: lambda_1 = {lam[0]:.3e}")
    # orthonormal in the discrete L2(h) inner product
    return DirichletFracOperator(domain, s, A, lam, vec / math.sqrt(domain.h))


def richardson(values, hs, order: float | None = None):
    """Extrapolate the last two of a mesh sequence; the order is estimated from three values if not given."""
    v = np.asarray(values, dtype=float)
    h = np.asarray(hs, dtype=float)
    if order is None:
        if v.size < 3:
            raise InputError("order estimation needs three mesh levels")
        order = math.log(abs((v[-3] - v[-2]) / (v[-2] - v[-1]))) / math.log(h[-3] / h[-2])
    r = (h[-2] / h[-1]) ** order
    return float(v[-1] + (v[-1] - v[-2]) / (r - 1.0)), float(order)


# --- states, energy, virial ---------------------------------------------------

@dataclass
class DomainState:
    domain: IntervalDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.domain.points,):
            raise InputError(f"expected {self.domain.points} interior values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("state contains non-finite values")
        self.values = v

    def mass(self) -> float:
        return float(self.domain.h * np.sum(np.abs(self.values) ** 2))

    def lp_power(self, p: float) -> float:
        return float(self.domain.h * np.sum(np.abs(self.values) ** p))


def energy_omega(u: DomainState, op: DirichletFracOperator, sigma: float) -> float:
    p = 2.0 * sigma + 2.0
    return 0.5 * op.form(u.values) - u.lp_power(p) / p


def centered_difference(v: np.ndarray, h: float) -> np.ndarray:
    """(v_{i+1} - v_{i-1}) / 2h with v = 0 beyond both ends (skew-symmetric)."""
    ext = np.concatenate(([0.0], v, [0.0]))
    return (ext[2:] - ext[:-2]) / (2.0 * h)


def virial_omega(u: DomainState) -> float:
    """M_Omega = 2 Im sum h conj(u_i) x_i (Du)_i."""
    d = u.domain
    return float(2.0 * d.h * np.imag(np.sum(np.conj(u.values) * d.x * centered_difference(u.values, d.h))))


def virial_derivative_omega(u: DomainState, op: DirichletFracOperator, sigma: float, coupling: float = 1.0) -> float:
    """Exact time derivative of M_Omega along the semi-discrete flow: 2 Re <H u, (X D + D X) u>."""
    d = u.domain
    v = u.values
    hv = op.matrix @ v - coupling * np.abs(v) ** (2.0 * sigma) * v
    bv = d.x * centered_difference(v, d.h) + centered_difference(d.x * v, d.h)
    return float(2.0 * d.h * np.real(np.vdot(hv, bv)))


def pohozaev_estimate_check(u: DomainState, op: DirichletFracOperator) -> dict:
    """lhs = Re sum h (x Du)_i (A conj u)_i, rhs = ((2s - 1)/2) sum h u_i (A conj u)_i.

    slack = rhs - lhs should be >= -tol_disc with tol_disc = 10 h^min(2s,1) <u, L u>.
    """
    d = u.domain
    v = u.values
    av = op.matrix @ np.conj(v)
    lhs = float(np.real(d.h * np.sum(d.x * centered_difference(v, d.h) * av)))
    form = float(np.real(d.h * np.sum(v * av)))
    rhs = (2.0 * op.s - 1.0) / 2.0 * form
    tol = 10.0 * d.h ** min(2.0 * op.s, 1.0) * form
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "tol_disc": tol, "form": form,
            "ok": bool(rhs - lhs >= -tol)}


def random_bump(domain: IntervalDomain, rng: np.random.Generator, complex_valued: bool = True) -> DomainState:
    """Smooth compactly supported bump sum inside (a, b) with random centers, widths and phases."""
    x = domain.x
    v = np.zeros_like(x, dtype=complex)
    span = domain.b - domain.a
    for _ in range(int(rng.integers(1, 4))):
        w = rng.uniform(0.1, 0.45) * span
        c = rng.uniform(domain.a + w, domain.b - w)
        z = (x - c) / w
        bump = np.where(np.abs(z) < 1, np.exp(-1.0 / np.maximum(1.0 - z * z, 1e-300)), 0.0)
        amp = rng.normal() + (1j * rng.normal() if complex_valued else 0.0)
        freq = rng.uniform(-3.0, 3.0) * math.pi / span if complex_valued else 0.0
        v += amp * bump * np.exp(1j * freq * x)
    return DomainState(domain, v)


# --- evolution ----------------------------------------------------------------

@dataclass
class DomainRunLog:
    s: float
    sigma: float
    h: float
    times: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    form: list = field(default_factory=list)
    m_omega: list = field(default_factory=list)
    dm_direct: list = field(default_factory=list)
    high_mode_fraction: list = field(default_factory=list)
    blowup_flag: bool = False
    blowup_time: float = math.nan
    blowup_reason: str = ""
    steps: int = 0
    final_state: DomainState | None = None

    def array(self, name):
        return np.asarray(getattr(self, name), dtype=float)

    def header(self):
        return ["t", "dt", "energy", "mass", "form", "m_omega", "dm_direct", "high_mode_fraction"]

    def rows(self):
        return zip(self.times, self.dts, self.energy, self.mass, self.form, self.m_omega, self.dm_direct,
                   self.high_mode_fraction)

    def energy_drift(self) -> float:
        return _drift(self.array("times"), self.array("energy"))

    def mass_drift(self) -> float:
        return _drift(self.array("times"), self.array("mass"))

    def summary(self) -> dict:
        return {"steps": self.steps, "t_end": self.times[-1] if self.times else 0.0,
                "snapshots": len(self.times), "blowup_flag": self.blowup_flag,
                "blowup_time": self.blowup_time, "blowup_reason": self.blowup_reason,
                "energy0": self.energy[0] if self.energy else math.nan,
                "energy_drift_per_time": self.energy_drift(), "mass_drift_per_time": self.mass_drift()}


def _drift(t, v) -> float:
    if len(t) < 2 or t[-1] <= t[0]:
        return 0.0
    scale = abs(v[0]) if v[0] != 0 else 1.0
    return float(np.max(np.abs(v - v[0])) / scale / (t[-1] - t[0]))


def evolve_domain(u0: DomainState, op: DirichletFracOperator, dt: float, sigma: float, t_max: float,
                  snapshot_stride: int = 10, coupling: float = 1.0, phase_limit: float = 0.1,
                  max_halvings: int = 12, blowup_form_factor: float = 50.0, high_mode_limit: float = 0.1,
                  conservation_tol: float = 1e-8) -> DomainRunLog:
    """Strang splitting with the linear substep diagonal in the eigenbasis.

    Flags blowup when <u, L u> exceeds blowup_form_factor^2 times its
    initial value or more than high_mode_limit of it sits in the upper half
    of the eigenmodes. dt is halved whenever the nonlinear phase per step
    exceeds phase_limit at the largest |u|.
    """
    if not (dt > 0 and t_max >= 0):
        raise InputError("dt must be positive and t_max nonnegative")
    if u0.domain != op.domain:
        raise InputError("state and operator live on different grids")
    lam = op.eigenvalues
    V = op.eigenvectors
    h = op.domain.h
    high = np.arange(lam.size) >= lam.size // 2
    log = DomainRunLog(op.s, sigma, op.domain.h)
    v = u0.values.copy()
    two_sigma = 2.0 * sigma
    cur_dt = dt
    halvings = 0
    t = 0.0
    lin = None

    def snapshot(vals):
        st = DomainState(op.domain, vals)
        c = h * (V.T @ vals)
        dens = lam * np.abs(c) ** 2
        f = float(np.sum(dens))
        log.times.append(t)
        log.dts.append(cur_dt)
        log.form.append(op.form(vals))
        log.mass.append(st.mass())
        log.energy.append(0.5 * log.form[-1] - coupling * st.lp_power(two_sigma + 2.0) / (two_sigma + 2.0))
        log.m_omega.append(virial_omega(st))
        log.dm_direct.append(virial_derivative_omega(st, op, sigma, coupling))
        log.high_mode_fraction.append(float(np.sum(dens[high])) / f if f > 0 else 0.0)

    snapshot(v)
    e0, m0, f0 = log.energy[0], log.mass[0], log.form[0]
    left = int(round(t_max / dt))
    remaining = snapshot_stride
    while left > 0:
        if coupling:
            amp = float(np.max(np.abs(v))) ** two_sigma
            while cur_dt * amp * abs(coupling) > phase_limit and halvings < max_halvings:
                cur_dt *= 0.5
                halvings += 1
                left *= 2
                remaining *= 2
        if lin is None or lin[0] != cur_dt:
            lin = (cur_dt, np.exp(-1j * cur_dt * lam))
        if coupling:
            v = v * np.exp(0.5j * cur_dt * coupling * np.abs(v) ** two_sigma)
        v = V @ (lin[1] * (h * (V.T @ v)))
        if coupling:
            v = v * np.exp(0.5j * cur_dt * coupling * np.abs(v) ** two_sigma)
        t += cur_dt
        left -= 1
        remaining -= 1
        log.steps += 1
        if not np.all(np.isfinite(v)):
            log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "non-finite state"
            break
        if remaining == 0 or left == 0:
            remaining = snapshot_stride * 2 ** halvings
            snapshot(v)
            if log.form[-1] > blowup_form_factor ** 2 * f0:
                log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "form threshold"
                break
            if log.high_mode_fraction[-1] > high_mode_limit:
                log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "left resolved band"
                break
            de = abs(log.energy[-1] - e0) / max(abs(e0), 1e-300) / max(t, 1.0)
            dm = abs(log.mass[-1] - m0) / m0 / max(t, 1.0)
            if max(de, dm) > 100.0 * conservation_tol:
                if log.form[-1] > GROWTH_FOR_RESOLUTION_LOSS ** 2 * f0:
                    log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "resolution lost"
                    break
                err = InstabilityError(f"conservation drift {max(de, dm):.2e} per unit time at t={t:.4g}")
                err.log = log
                raise err
    log.final_state = DomainState(op.domain, v)
    return log


def negative_energy_amplitude_omega(shape: DomainState, op: DirichletFracOperator, sigma: float,
                                    tol: float = 1e-6) -> float:
    lo, hi = 0.0, 1.0
    while energy_omega(DomainState(shape.domain, hi * shape.values), op, sigma) >= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise DomainError("no negative-energy amplitude found")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if energy_omega(DomainState(shape.domain, mid * shape.values), op, sigma) < 0:
            hi = mid
        else:
            lo = mid
    return hi


def monotonicity_omega(log: DomainRunLog, slack: float = 0.0, transient: float = 0.0,
                       include_discretization: bool = True) -> dict:
    """FD(dM_Omega/dt) <= 4 sigma E0 - 2 (sigma - 2s) <u, L u> (N = 1) at each snapshot.

    With include_discretization the bound is raised by 4 tol_disc(t), the
    Pohozaev discretization tolerance carried through the virial derivative.
    required_slack is the smallest extra relative slack that makes every
    snapshot after the transient pass; form_floor is min_t <u, L u>.
    """
    t = log.array("times")
    if t.size < 3:
        raise InputError("need at least three snapshots")
    m = log.array("m_omega")
    fd = np.gradient(m, t, edge_order=2)
    e0 = log.energy[0]
    form = log.array("form")
    delta = log.sigma - 2.0 * log.s
    bound = 4.0 * log.sigma * e0 - 2.0 * delta * form
    allowance = 4.0 * 10.0 * log.h ** min(2.0 * log.s, 1.0) * form if include_discretization else 0.0 * form
    sel = t >= transient
    excess = ((fd - bound - allowance) / np.abs(bound))[sel]
    raw = ((fd - bound) / np.abs(bound))[sel]
    dm = np.diff(m[sel])
    return {"fraction_ok": float(np.mean(excess <= slack)), "required_slack": float(max(0.0, np.max(excess))),
            "max_raw_excess": float(np.max(raw)), "max_allowance_rel": float(np.max((allowance / np.abs(bound))[sel])),
            "decreasing_fraction": float(np.mean(dm < 0)) if dm.size else math.nan,
            "form_floor": float(np.min(form)), "energy0": e0, "snapshots": int(np.sum(sel))}
