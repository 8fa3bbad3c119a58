"""Strang-split time integration of i u_t = (-Delta)^s u - |u|^(2 sigma) u on the periodic box.

Each step applies the exact nonlinear phase e^{+i dt/2 |u|^(2 sigma)}, the
exact linear propagator e^{-i dt |xi|^(2s)} followed by a 2/3 dealiasing
mask, then the second nonlinear half step. |u| is invariant under the phase
rotation, so only the splitting itself introduces error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import optimize

from .cutoff import RescaledCutoff, build_profile
from .errors import (DomainError, FitRejectedError, InputError, InstabilityError, LeakageError,
                     SupportError)
from .fracops import _WORKERS, FieldOnGrid, FracParams, Grid, energy, frac_multiplier, frac_seminorm
from .quadrature import MQuadrature
from .domain import GROWTH_FOR_RESOLUTION_LOSS
from .virial import (biharmonic_bound_explicit, tail_nonlinear, virial_pairs,
                     virial_rhs_general)


@dataclass(frozen=True)
class EvolveConfig:
    dt: float = 1e-3
    t_max: float = 1.0
    scheme: str = "strang"
    dealias: float = 2.0 / 3.0
    blowup_grad_factor: float = 50.0
    blowup_grad_threshold: float | None = None
    band_fraction_limit: float = 0.1
    R_list: tuple = ()
    eta: float = 1.0
    eps: float = 0.1
    snapshot_stride: int = 10
    rhs_stride: int = 0            # rhs of the monotonicity estimate every k-th snapshot; 0 disables
    phase_limit: float = 0.1
    adaptive: bool = True
    max_halvings: int = 12
    coupling: float = 1.0          # 0 switches the nonlinearity off
    conservation_tol: float = 1e-8
    leakage_limit: float = 1e-6
    quad_nodes_per_panel: int = 8

    def __post_init__(self):
        if self.scheme != "strang":
            raise InputError(f"unknown scheme {self.scheme!r}; only 'strang' is available")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InputError(f"dt must be positive, got {self.dt}")
        if not (self.t_max >= 0 and math.isfinite(self.t_max)):
            raise InputError(f"t_max must be finite and nonnegative, got {self.t_max}")
        if self.t_max / self.dt > 1e8:
            raise InputError(f"t_max/dt = {self.t_max / self.dt:.1e} steps is not a sane run length")
        if not (0 < self.dealias <= 1):
            raise InputError(f"dealias fraction must lie in (0, 1], got {self.dealias}")
        if self.snapshot_stride < 1:
            raise InputError("snapshot_stride must be >= 1")
        object.__setattr__(self, "R_list", tuple(float(r) for r in self.R_list))

    def validate_for(self, grid: Grid) -> None:
        for R in self.R_list:
            if not 10.0 * R < grid.half_length:
                raise SupportError(f"cutoff radius R={R:g} needs 10R < L = {grid.half_length:g}")


def dealias_mask(grid: Grid, fraction: float = 2.0 / 3.0) -> np.ndarray:
    """Keep modes with |k_j| <= fraction * k_max in every direction."""
    kmax = math.pi * (grid.points // 2) / grid.half_length
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.wavevectors:
        mask &= np.abs(k) <= fraction * kmax + 1e-12
    return mask


def band_fraction(u: FieldOnGrid, s: float, fraction: float = 2.0 / 3.0) -> float:
    """Share of ||(-Delta)^(s/2) u||^2 carried by the upper half of the retained band."""
    g = u.grid
    kmax = math.pi * (g.points // 2) / g.half_length
    edge = 0.5 * fraction * kmax
    outer = np.zeros(g.shape, dtype=bool)
    for k in g.wavevectors:
        outer |= np.abs(k) > edge
    dens = frac_multiplier(g, s) * np.abs(u.fft()) ** 2
    tot = float(dens.sum())
    return float(dens[outer].sum()) / tot if tot > 0 else 0.0


class _Propagator:
    """Caches the linear symbol and the mask for repeated steps."""

    def __init__(self, grid: Grid, p: FracParams, dealias: float = 2.0 / 3.0, coupling: float = 1.0):
        self.grid = grid
        self.p = p
        self.symbol = frac_multiplier(grid, p.s)
        self.mask = dealias_mask(grid, dealias) if dealias < 1 else np.ones(grid.shape, dtype=bool)
        self.coupling = coupling
        self._dt = None
        self._lin = None

    def linear(self, dt):
        if dt != self._dt:
            self._lin = np.exp(-1j * dt * self.symbol) * self.mask
            self._dt = dt
        return self._lin

    def step(self, v: np.ndarray, dt: float) -> np.ndarray:
        two_sigma = 2.0 * self.p.sigma
        if self.coupling:
            v = v * np.exp(0.5j * dt * self.coupling * np.abs(v) ** two_sigma)
        v = sfft.ifftn(self.linear(dt) * sfft.fftn(v, workers=_WORKERS), workers=_WORKERS)
        if self.coupling:
            v = v * np.exp(0.5j * dt * self.coupling * np.abs(v) ** two_sigma)
        return v


def step_strang(u: FieldOnGrid, dt: float, p: FracParams, dealias: float = 2.0 / 3.0,
                coupling: float = 1.0) -> FieldOnGrid:
    """One Strang step of size dt (negative dt steps backward)."""
    v = _Propagator(u.grid, p, dealias, coupling).step(u.values, dt)
    if not np.all(np.isfinite(v)):
        raise InstabilityError("non-finite values after Strang step")
    return u.with_values(v)


def apply_dealias(u: FieldOnGrid, fraction: float = 2.0 / 3.0) -> FieldOnGrid:
    return u.with_values(sfft.ifftn(dealias_mask(u.grid, fraction) * u.fft()))


@dataclass
class RunLog:
    params: FracParams
    R_list: tuple
    times: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    boundary_mass: list = field(default_factory=list)
    band_fraction: list = field(default_factory=list)
    max_amplitude: list = field(default_factory=list)
    m_r: dict = field(default_factory=dict)
    dm_direct: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    error_terms: dict = field(default_factory=dict)
    blowup_flag: bool = False
    blowup_time: float = math.nan
    blowup_reason: str = ""
    steps: int = 0
    fit: dict | None = None
    final_state: FieldOnGrid | None = None

    def array(self, name):
        return np.asarray(getattr(self, name), dtype=float)

    def series(self, name, R):
        return np.asarray(getattr(self, name)[float(R)], dtype=float)

    def energy_drift(self) -> float:
        """max |E(t) - E(0)| / |E(0)| divided by the elapsed time."""
        return _drift(self.array("times"), self.array("energy"))

    def mass_drift(self) -> float:
        return _drift(self.array("times"), self.array("mass"))

    def header(self) -> list:
        cols = ["t", "dt", "energy", "mass", "grad_norm", "boundary_mass", "band_fraction", "max_amplitude"]
        for R in self.R_list:
            cols += [f"m_r[{R:g}]", f"dm_direct[{R:g}]", f"rhs[{R:g}]", f"error_terms[{R:g}]"]
        return cols

    def rows(self):
        for i, t in enumerate(self.times):
            row = [t, self.dts[i], self.energy[i], self.mass[i], self.grad_norm[i], self.boundary_mass[i],
                   self.band_fraction[i], self.max_amplitude[i]]
            for R in self.R_list:
                row += [self.m_r[R][i], self.dm_direct[R][i], self.rhs[R][i], self.error_terms[R][i]]
            yield row

    def summary(self) -> dict:
        return {
            "steps": self.steps,
            "t_end": self.times[-1] if self.times else 0.0,
            "snapshots": len(self.times),
            "blowup_flag": self.blowup_flag,
            "blowup_time": self.blowup_time,
            "blowup_reason": self.blowup_reason,
            "energy0": self.energy[0] if self.energy else math.nan,
            "energy_drift_per_time": self.energy_drift(),
            "mass_drift_per_time": self.mass_drift(),
            "fit": self.fit,
        }


def _drift(t, v) -> float:
    if len(t) < 2 or t[-1] <= t[0]:
        return 0.0
    scale = abs(v[0]) if v[0] != 0 else 1.0
    return float(np.max(np.abs(v - v[0])) / scale / (t[-1] - t[0]))


def run(u0: FieldOnGrid, config: EvolveConfig, p: FracParams, profile=None) -> RunLog:
    """Integrate from u0 until t_max or a blowup flag, logging every snapshot_stride steps.

    Raises LeakageError when more than leakage_limit of the mass reaches the
    outer tenth of the box and InstabilityError when the energy or mass drift
    exceeds 100 times the conservation tolerance per unit time before any
    blowup flag. Both carry the partial log as .log.
    """
    if not isinstance(u0, FieldOnGrid):
        raise InputError("u0 must be a FieldOnGrid")
    if p.dim != u0.grid.dim:
        raise DomainError(f"params dim {p.dim} does not match grid dim {u0.grid.dim}")
    grid = u0.grid
    config.validate_for(grid)
    profile = profile or (build_profile() if config.R_list else None)
    cutoffs = {R: RescaledCutoff(profile, R) for R in config.R_list}
    quad = MQuadrature(nodes_per_panel=config.quad_nodes_per_panel)
    prop = _Propagator(grid, p, config.dealias, config.coupling)
    log = RunLog(params=p, R_list=tuple(config.R_list))
    for R in config.R_list:
        log.m_r[R], log.dm_direct[R], log.rhs[R], log.error_terms[R] = [], [], [], []

    p_eff = p if config.coupling == 1.0 else None
    v = u0.values.copy()
    dt = config.dt
    t = 0.0
    snap_index = 0
    halvings = 0
    remaining = config.snapshot_stride
    grad_threshold = None

    def snapshot(vals, t_now):
        nonlocal snap_index, grad_threshold
        u = grid.field(vals)
        e = _energy(u, p, config.coupling)
        gn = math.sqrt(max(0.0, float(np.sum(prop.symbol * np.abs(u.fft()) ** 2) * grid.parseval)))
        log.times.append(t_now)
        log.dts.append(dt)
        log.energy.append(e)
        log.mass.append(u.mass())
        log.grad_norm.append(gn)
        log.boundary_mass.append(u.boundary_mass_fraction())
        log.band_fraction.append(band_fraction(u, p.s, config.dealias))
        log.max_amplitude.append(float(np.max(np.abs(vals))))
        pairs = virial_pairs(u, cutoffs, p_eff)
        for R, c in cutoffs.items():
            m_r, dm = pairs[R]
            log.m_r[R].append(m_r)
            log.dm_direct[R].append(dm)
            if p_eff is not None:
                log.error_terms[R].append(biharmonic_bound_explicit(c, p.s, p.dim, log.mass[-1])
                                          + tail_nonlinear(u, c, p))
            else:
                log.error_terms[R].append(math.nan)
            if config.rhs_stride and snap_index % config.rhs_stride == 0 and p_eff is not None:
                log.rhs[R].append(virial_rhs_general(u, c, p, quad).rhs_total)
            else:
                log.rhs[R].append(math.nan)
        if grad_threshold is None:
            grad_threshold = config.blowup_grad_threshold or config.blowup_grad_factor * gn
        snap_index += 1
        return u

    snapshot(v, t)
    e0 = log.energy[0]
    escale = max(abs(e0), 1e-300)
    n_steps = int(round(config.t_max / config.dt))
    fine_steps_left = n_steps  # counted in units of the current dt
    while fine_steps_left > 0:
        if config.adaptive and config.coupling:
            amp = float(np.max(np.abs(v))) ** (2.0 * p.sigma)
            while dt * amp * abs(config.coupling) > config.phase_limit and halvings < config.max_halvings:
                dt *= 0.5
                halvings += 1
                remaining *= 2
                fine_steps_left *= 2
        v_new = prop.step(v, dt)
        if not np.all(np.isfinite(v_new)):
            log.blowup_flag = True
            log.blowup_time = t
            log.blowup_reason = "non-finite field"
            break
        v = v_new
        t += dt
        log.steps += 1
        fine_steps_left -= 1
        remaining -= 1
        if remaining == 0 or fine_steps_left == 0:
            remaining = config.snapshot_stride * 2 ** halvings
            snapshot(v, t)
            if log.boundary_mass[-1] > config.leakage_limit:
                err = LeakageError(f"mass fraction {log.boundary_mass[-1]:.2e} reached the box edge at t={t:.4g}")
                err.log = log
                raise err
            gn = log.grad_norm[-1]
            if gn > grad_threshold:
                log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "gradient threshold"
                break
            if log.band_fraction[-1] > config.band_fraction_limit:
                log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "left resolved band"
                break
            # the O(dt^2) splitting offset appears at once, so short times count as one unit
            drift_e = abs(log.energy[-1] - e0) / escale / max(t, 1.0)
            drift_m = abs(log.mass[-1] - log.mass[0]) / log.mass[0] / max(t, 1.0)
            if max(drift_e, drift_m) > 100.0 * config.conservation_tol and log.boundary_mass[-1] < 1e-8:
                if gn > GROWTH_FOR_RESOLUTION_LOSS * log.grad_norm[0]:
                    log.blowup_flag, log.blowup_time, log.blowup_reason = True, t, "resolution lost"
                    break
                err = InstabilityError(
                    f"conservation drift {max(drift_e, drift_m):.2e} per unit time exceeds "
                    f"100 x {config.conservation_tol:g} at t={t:.4g}")
                err.log = log
                raise err
    log.final_state = grid.field(v)
    return log


def _energy(u: FieldOnGrid, p: FracParams, coupling: float) -> float:
    if coupling == 1.0:
        return energy(u, p)
    return 0.5 * frac_seminorm(u, p.s) ** 2 - coupling * u.lp_power(p.p) / p.p


def detect_blowup(log: RunLog, config: EvolveConfig):
    """(flag, time) of the first snapshot past the gradient threshold or the band limit."""
    g = log.array("grad_norm")
    if g.size == 0:
        return False, math.nan
    thr = config.blowup_grad_threshold or config.blowup_grad_factor * g[0]
    band = log.array("band_fraction") if log.band_fraction else np.zeros_like(g)
    hit = np.flatnonzero((g > thr) | (band > config.band_fraction_limit))
    if hit.size == 0:
        return False, math.nan
    return True, float(log.times[hit[0]])


# --- data preparation ---------------------------------------------------------

def negative_energy_amplitude(shape: FieldOnGrid, p: FracParams, tol: float = 1e-6):
    """Bisection for the amplitude lambda0 where E[lambda * shape] changes sign.

    Returns lambda0 with |bracket| < tol * lambda0; any lambda > lambda0 gives
    negative energy.
    """
    lo, hi = 0.0, 1.0
    while energy(hi * shape, p) >= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise DomainError("no negative-energy amplitude found")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if energy(mid * shape, p) < 0:
            hi = mid
        else:
            lo = mid
    return hi


# --- collapse fit -------------------------------------------------------------

def _final_decade(m):
    """Indices of the tail where |M| is within a factor 10 of its final value."""
    mag = np.abs(m)
    end = mag[-1]
    keep = np.flatnonzero(mag >= end / 10.0)
    # contiguous tail only
    start = len(m) - 1
    while start - 1 >= 0 and mag[start - 1] >= end / 10.0:
        start -= 1
    return np.arange(start, len(m)) if keep.size else np.arange(len(m) - 1, len(m))


def fit_collapse(times, m_r, s: float, exponent: float | None = None, window="final-decade"):
    """Fit log(-M_R) = log C + a log|t - t*| with a = 1 - 2s (or the given exponent).

    Uses the tail where |M_R| stays within a factor 10 of its final value
    (window="all" uses every point). Returns dict(C, t_star, residual, n),
    residual being the RMS of the log-residuals. Raises FitRejectedError if
    the window is not negative and strictly decreasing or has < 4 points.
    """
    t = np.asarray(times, dtype=float)
    m = np.asarray(m_r, dtype=float)
    a = 1.0 - 2.0 * s if exponent is None else exponent
    if t.size != m.size or t.size < 4:
        raise FitRejectedError("need at least 4 matching samples")
    idx = np.arange(t.size) if window == "all" else _final_decade(m)
    tt, mm = t[idx], m[idx]
    if tt.size < 4:
        raise FitRejectedError(f"only {tt.size} samples in the fit window")
    if np.any(mm >= 0):
        raise FitRejectedError("series is not negative on the fit window")
    if np.any(np.diff(mm) >= 0):
        raise FitRejectedError("series is not strictly decreasing on the fit window")
    y = np.log(-mm)
    span = tt[-1] - tt[0]
    sign = -1.0 if a < 0 else 1.0   # a < 0: |M| grows toward t*, so t* lies after the data

    def resid(tstar):
        x = np.log(np.abs(tstar - tt))
        logc = float(np.mean(y - a * x))
        return y - logc - a * x, logc

    def cost(tstar):
        r, _ = resid(tstar)
        return float(np.sum(r * r))

    if sign < 0:
        lo, hi = tt[-1] + 1e-9 * max(span, 1.0), tt[-1] + 100.0 * max(span, 1e-12)
    else:
        lo, hi = tt[0] - 100.0 * max(span, 1e-12), tt[0] - 1e-9 * max(span, 1.0)
    # coarse log-spaced scan of the gap to t*, then bounded refinement
    gaps = np.geomspace(1e-9 * max(span, 1.0), 100.0 * max(span, 1e-12), 400)
    cands = tt[-1] + gaps if sign < 0 else tt[0] - gaps
    costs = [cost(c) for c in cands]
    j = int(np.argmin(costs))
    a_, b_ = cands[max(j - 1, 0)], cands[min(j + 1, len(cands) - 1)]
    res = optimize.minimize_scalar(cost, bounds=(min(a_, b_), max(a_, b_)), method="bounded",
                                   options={"xatol": 1e-14 * max(1.0, abs(tt[-1]))})
    tstar = float(res.x)
    r, logc = resid(tstar)
    return {"C": math.exp(logc), "t_star": tstar, "residual": float(np.sqrt(np.mean(r * r))),
            "n": int(tt.size), "exponent": a, "t_first": float(tt[0]), "t_last": float(tt[-1])}


# --- monotonicity -------------------------------------------------------------

def fd_derivative(times, values):
    """Second-order finite-difference derivative on a possibly nonuniform time grid."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 3:
        return np.full_like(v, math.nan)
    return np.gradient(v, t, edge_order=2)


def monotonicity_report(log: RunLog, p: FracParams, slack: float = 0.0, transient: float = 0.0,
                        include_error_terms: bool = True) -> dict:
    """Per R: how often FD(dM_R/dt) stays below the virial bound.

    Bound: 4 sigma N E0 - 2 delta grad^2 (supercritical) or 4 s E0 when
    sigma N = 2s, plus the logged error terms (explicit biharmonic bound and
    the exact tail nonlinearity) when include_error_terms is set, plus
    slack * |bound|. required_slack is the smallest relative slack that makes
    every snapshot after the transient pass. The report also records
    min_t grad_norm (a positive floor is expected when E0 < 0) and the
    share of decreasing steps of M_R after the transient.
    """
    t = log.array("times")
    e0 = log.energy[0]
    g2 = log.array("grad_norm") ** 2
    critical = p.l2_critical
    if critical:
        bound = np.full_like(t, 4.0 * p.s * e0)
    else:
        bound = 4.0 * p.sigma * p.dim * e0 - 2.0 * p.delta * g2
    sel = t >= transient
    out = {"critical": critical, "energy0": e0, "grad_floor": float(np.min(np.sqrt(g2))),
           "grad_floor_positive": bool(np.min(g2) > 0), "transient": transient,
           "snapshots": int(np.sum(sel)), "per_R": {}}
    for R in log.R_list:
        m = log.series("m_r", R)
        fd = fd_derivative(t, m)
        err = log.series("error_terms", R) if include_error_terms and log.error_terms.get(R) else np.zeros_like(t)
        err = np.nan_to_num(err)
        excess = ((fd - bound - err) / np.abs(bound))[sel]
        ok = excess <= slack
        dm = np.diff(m[sel])
        out["per_R"][R] = {
            "fraction_ok": float(np.mean(ok)) if ok.size else math.nan,
            "required_slack": float(max(0.0, np.max(excess))) if excess.size else math.nan,
            "max_error_term_rel": float(np.max(err[sel] / np.abs(bound[sel]))) if ok.size else math.nan,
            "decreasing_fraction": float(np.mean(dm < 0)) if dm.size else math.nan,
            "first_decreasing_time": first_decreasing_time(t, m),
            "m_r_final": float(m[-1]),
        }
    return out


def first_decreasing_time(times, m_r) -> float:
    """Earliest time after which M_R is strictly decreasing at every snapshot."""
    m = np.asarray(m_r, dtype=float)
    t = np.asarray(times, dtype=float)
    inc = np.flatnonzero(np.diff(m) >= 0)
    if inc.size == 0:
        return float(t[0])
    k = inc[-1] + 1
    return float(t[k]) if k < t.size else math.inf


def trajectory_rows(log: RunLog):
    return log.header(), list(log.rows())


def config_dict(config: EvolveConfig) -> dict:
    return asdict(config)
