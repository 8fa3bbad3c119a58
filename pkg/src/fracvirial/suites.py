"""Acceptance suites: each runs one experiment family and returns every measured number with its tolerance."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cutoff as co
from . import domain as dm
from . import evolve as ev
from . import groundstate as gs
from .fracops import (FracParams, Grid, balakrishnan_apply, energy, frac_laplacian, frac_seminorm,
                      plancherel_weight, weighted_gradient_integral)
from .virial import localized_virial, virial_rhs_general


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str          # "<=" or ">="
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class SuiteReport:
    name: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    runtime_limit: float = math.inf
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self):
        return next((c for c in self.checks if not c.passed), None)

    def add(self, name, value, tolerance, relation="<=", **detail):
        value = float(value)
        ok = value <= tolerance if relation == "<=" else value >= tolerance
        self.checks.append(Check(name, value, float(tolerance), relation, bool(ok and math.isfinite(value)), detail))

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "seconds": self.seconds,
                "runtime_limit": self.runtime_limit, "checks": [asdict(c) for c in self.checks],
                "data": self.data}


def _timed(name, limit):
    def wrap(fn):
        def run(**kw):
            rep = SuiteReport(name, runtime_limit=limit)
            t0 = time.perf_counter()
            fn(rep, **kw)
            rep.seconds = time.perf_counter() - t0
            rep.add("runtime_seconds", rep.seconds, limit)
            return rep
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


S_VALUES = (0.55, 0.6, 0.75, 0.9)


def operator_fields(seed: int = 0, per_dim: int = 10):
    """The shared band-limited test set: per_dim fields in 1D (M=4096) and 2D (M=256), s cycling through S_VALUES."""
    rng = np.random.default_rng(seed)
    out = []
    for dim, m in ((1, 4096), (2, 256)):
        g = Grid(dim, 32.0, m)
        for i in range(per_dim):
            out.append((g.random_bandlimited(rng, band=8.0), S_VALUES[i % len(S_VALUES)]))
    return out


@_timed("operator-equivalence", 60.0)
def operator_equivalence(rep, seed: int = 0):
    """Spectral multiplier against the Balakrishnan resolvent quadrature."""
    worst = 0.0
    for u, s in operator_fields(seed):
        a = frac_laplacian(u, s).values
        b = balakrishnan_apply(u, s).values
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(a)))
    rep.add("max_relative_difference", worst, 1e-6, fields=20)


@_timed("plancherel-weight", 30.0)
def plancherel_identity(rep, seed: int = 0):
    """m-integral of the weighted gradient against s ||(-Delta)^(s/2) u||^2, plus the scalar weight at (2, 0.5)."""
    worst = 0.0
    for u, s in operator_fields(seed):
        exact = s * frac_seminorm(u, s) ** 2
        worst = max(worst, abs(weighted_gradient_integral(u, s) - exact) / exact)
    rep.add("max_relative_error", worst, 1e-6, fields=20)
    rep.add("scalar_weight_error", abs(plancherel_weight(2.0, 0.5) - 0.25), 1e-6)


def run_operator_identities(seed: int = 0):
    a = operator_equivalence(seed=seed)
    b = plancherel_identity(seed=seed)
    rep = SuiteReport("operator-identities", a.checks + b.checks, a.seconds + b.seconds, 90.0)
    return rep


VIRIAL_SETUP = dict(L=48.0, M=256, amplitude=0.6, width=2.0, R=4.0, dt=5e-4, t_eval=0.5,
                    fd_steps=(0.04, 0.02, 0.01))


@_timed("virial-identity", 600.0)
def virial_identity(rep, **overrides):
    """Centered differences of M_R along a trajectory against the evaluated virial derivative."""
    cfg = {**VIRIAL_SETUP, **overrides}
    p = FracParams(0.8, 1.0, 2)
    g = Grid(2, cfg["L"], cfg["M"])
    u0 = ev.apply_dealias(g.gaussian(cfg["amplitude"], cfg["width"]))
    config = ev.EvolveConfig(dt=cfg["dt"], t_max=cfg["t_eval"], R_list=(cfg["R"],), snapshot_stride=50)
    log = ev.run(u0, config, p)
    u = log.final_state
    c = co.RescaledCutoff(co.build_profile(), cfg["R"])
    vr = virial_rhs_general(u, c, p)
    prop = ev._Propagator(g, p)
    errs = []
    for h in cfg["fd_steps"]:
        fd = (localized_virial(g.field(prop.step(u.values, h)), c)
              - localized_virial(g.field(prop.step(u.values, -h)), c)) / (2.0 * h)
        errs.append(abs(fd - vr.rhs_total))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    rep.data.update(energy0=log.energy[0], rhs_total=vr.rhs_total, direct_derivative=vr.direct_derivative,
                    fd_errors=errs, ratios=ratios, blowup_flag=log.blowup_flag,
                    energy_drift=log.energy_drift(), mass_drift=log.mass_drift())
    rep.add("min_halving_ratio", min(ratios), 3.5, ">=")
    rep.add("terminal_relative_error", errs[-1] / abs(vr.rhs_total), 1e-3)
    rep.add("energy_drift_per_time", log.energy_drift(), 1e-8)
    rep.add("mass_drift_per_time", log.mass_drift(), 1e-8)
    rep.add("no_blowup_flag", float(log.blowup_flag), 0.0)


@_timed("groundstate-thresholds", 120.0)
def groundstate_thresholds(rep):
    """Petviashvili oracle in 1D, Pohozaev residuals, K agreement and the critical value of F in 2D."""
    p1 = FracParams(0.5, 0.5, 1)
    g1 = Grid(1, 16384.0, 2 ** 19)
    q1 = gs.solve_ground_state(p1, g1, tol=1e-11)
    x = g1.axis
    rep.add("oracle_sup_error", np.max(np.abs(q1.profile.values.real - 2.0 / (1.0 + x * x))), 1e-5)

    p2 = FracParams(0.8, 1.0, 2)
    q2 = gs.solve_ground_state(p2, Grid(2, 64.0, 1024))
    r1, r2 = gs.pohozaev_residuals(q2)
    rep.add("pohozaev_r1", abs(r1), 1e-6)
    rep.add("pohozaev_r2", abs(r2), 1e-6)
    th = gs.thresholds(q2, tol=1.0)
    rep.add("k_spread", th.spread, 1e-4, k=[th.k_const, th.k_norms, th.k_energy_mass])
    y, f = gs.critical_point_numeric(th, p2, q2.mass)
    target = p2.s_c / p2.dim * y * y
    rep.add("f_at_ymax_relative", abs(f - target) / abs(target), 1e-10, y_max=y, y_max_closed=th.y_max)
    rep.data.update(iterations_1d=q1.iterations, iterations_2d=q2.iterations, y_max=y, f_at_max=f)


@_timed("cutoff-certificate", 5.0)
def cutoff_certificate(rep):
    """Pointwise cutoff inequalities and an admissible eta at (2, 0.8) and (2, 0.9)."""
    prof = co.build_profile()
    worst = min(min(co.phi1_margins(co.RescaledCutoff(prof, R), 2).values()) for R in (1.0, 4.0, 16.0))
    rep.add("phi_inequality_margin", worst, -1e-12, ">=")
    for s in (0.8, 0.9):
        eta = co.find_eta(prof, s, 2)
        margin = min(co.verify_psi_inequality(co.RescaledCutoff(prof, R), eta, s, 2).min_margin for R in (1.0, 7.0))
        rep.add(f"eta_star_s{s}", eta, 1e-8, ">=")
        rep.add(f"psi_margin_s{s}", margin, 0.0, ">=", eta=eta)


BLOWUP_SETUP = dict(L=168.0, M=1024, width=4.0, amplitude_factor=1.2, dt=2e-3, t_max=20.0,
                    snapshot_stride=5, R_list=(4.0, 8.0, 16.0), transient=0.1, conservation_tol=1e-4)


def _blowup_run(p, cfg):
    g = Grid(2, cfg["L"], cfg["M"])
    shape = ev.apply_dealias(g.gaussian(1.0, cfg["width"]))
    lam0 = ev.negative_energy_amplitude(shape, p)
    u0 = (cfg["amplitude_factor"] * lam0) * shape
    config = ev.EvolveConfig(dt=cfg["dt"], t_max=cfg["t_max"], R_list=cfg["R_list"],
                             snapshot_stride=cfg["snapshot_stride"], conservation_tol=cfg["conservation_tol"])
    return lam0, u0, ev.run(u0, config, p)


@_timed("supercritical-blowup", 900.0)
def supercritical_blowup(rep, **overrides):
    """Negative-energy Gaussian at (N, sigma, s) = (2, 1, 0.8)."""
    cfg = {**BLOWUP_SETUP, **overrides}
    p = FracParams(0.8, 1.0, 2)
    lam0, u0, log = _blowup_run(p, cfg)
    mono = ev.monotonicity_report(log, p, transient=cfg["transient"])
    raw = ev.monotonicity_report(log, p, transient=cfg["transient"], include_error_terms=False)
    t = log.array("times")
    rep.data.update(amplitude_threshold=lam0, energy0=log.energy[0], summary=log.summary(),
                    monotonicity=mono, monotonicity_without_error_terms=raw)
    rep.add("energy0_negative", log.energy[0], 0.0, "<=")
    rep.add("blowup_flag", float(log.blowup_flag), 1.0, ">=", reason=log.blowup_reason, time=log.blowup_time)
    for R in cfg["R_list"]:
        r = mono["per_R"][R]
        rep.add(f"decreasing_after_transient_R{R:g}", r["decreasing_fraction"], 1.0, ">=",
                first_decreasing_time=r["first_decreasing_time"])
        rep.add(f"monotonicity_fraction_R{R:g}", r["fraction_ok"], 0.99, ">=",
                required_slack_without_error_terms=raw["per_R"][R]["required_slack"])
        try:
            fit = ev.fit_collapse(t, log.series("m_r", R), p.s)
            alt = ev.fit_collapse(t, log.series("m_r", R), p.s, exponent=1.0 / (1.0 - 2.0 * p.s))
            rep.add(f"collapse_fit_residual_R{R:g}", fit["residual"], 0.10, fit=fit,
                    residual_with_integrated_exponent=alt["residual"])
        except Exception as exc:  # a rejected fit is a failed check, not a crash
            rep.add(f"collapse_fit_residual_R{R:g}", math.inf, 0.10, error=str(exc))


@_timed("critical-blowup", 900.0)
def critical_blowup(rep, **overrides):
    """Negative-energy run at sigma = 2s/N, s = 0.8, N = 2."""
    cfg = {**BLOWUP_SETUP, **overrides}
    p = FracParams(0.8, 0.8, 2)
    lam0, u0, log = _blowup_run(p, cfg)
    raw = ev.monotonicity_report(log, p, transient=0.0, include_error_terms=False)
    t = log.array("times")
    gn = log.array("grad_norm")
    half = t > 0.5 * t[-1]
    slope = float(np.polyfit(np.log(t[half]), np.log(gn[half]), 1)[0]) if half.sum() > 2 else math.nan
    rep.data.update(amplitude_threshold=lam0, energy0=log.energy[0], summary=log.summary(), monotonicity=raw,
                    growth_slope=slope)
    rep.add("energy0_negative", log.energy[0], 0.0, "<=")
    rep.add("slack_fraction_R16", raw["per_R"][16.0]["required_slack"], 0.05)
    rep.add("grad_growth_log_slope", slope, 0.8 * p.s, ">=")


DOMAIN_SETUP = dict(points=512, s=0.8, sigma=2.0, width=0.6, amplitude_factor=1.2, dt=1e-4, t_max=1.0,
                    snapshot_stride=2, conservation_tol=1e-6, smooth_amplitude=0.5, smooth_t_max=1.0)


@_timed("domain-blowup", 600.0)
def domain_blowup(rep, seed: int = 0, **overrides):
    """Interval operator spectrum, Pohozaev estimate, and the negative-energy run."""
    cfg = {**DOMAIN_SETUP, **overrides}
    d = dm.IntervalDomain(-1.0, 1.0, cfg["points"])
    op = dm.assemble(d, cfg["s"])
    lam = op.eigenvalues
    rep.add("smallest_eigenvalue", lam[0], 0.0, ">=")
    rep.add("eigenvalues_nondecreasing", float(np.min(np.diff(lam))), 0.0, ">=")
    lam1 = dm.assemble(d, 0.99).eigenvalues[0]
    ref = (math.pi / 2.0) ** 2
    rep.add("s099_lambda1_relative", abs(lam1 - ref) / ref, 0.05, lambda1=lam1)

    rng = np.random.default_rng(seed)
    floors, tols = [], []
    for m in (128, 256, 512):
        dd = dm.IntervalDomain(-1.0, 1.0, m)
        oo = dm.assemble(dd, cfg["s"])
        checks = [dm.pohozaev_estimate_check(dm.random_bump(dd, rng), oo) for _ in range(100)]
        rep.add(f"pohozaev_all_within_tol_M{m}", float(all(c["ok"] for c in checks)), 1.0, ">=")
        floors.append(min(min(c["slack"] / c["form"] for c in checks), 0.0))
        tols.append(10.0 * dd.h ** min(2.0 * cfg["s"], 1.0))
    tol_ratios = [tols[i] / tols[i + 1] for i in range(2)]
    rep.add("tol_disc_refinement_ratio", min(tol_ratios), 1.5, ">=", slack_floors=floors)

    x = d.x
    z = x / cfg["width"]
    shape = dm.DomainState(d, np.where(np.abs(z) < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - z * z, 1e-300)), 0.0))
    lam0 = dm.negative_energy_amplitude_omega(shape, op, cfg["sigma"])
    u0 = dm.DomainState(d, cfg["amplitude_factor"] * lam0 * shape.values)
    log = dm.evolve_domain(u0, op, cfg["dt"], cfg["sigma"], cfg["t_max"], snapshot_stride=cfg["snapshot_stride"],
                           conservation_tol=cfg["conservation_tol"])
    mono = dm.monotonicity_omega(log)
    rep.data.update(blowup_summary=log.summary(), monotonicity=mono, amplitude_threshold=lam0)
    rep.add("energy0_negative", log.energy[0], 0.0, "<=")
    rep.add("blowup_flag", float(log.blowup_flag), 1.0, ">=", reason=log.blowup_reason)
    rep.add("m_omega_decreasing_fraction", mono["decreasing_fraction"], 1.0, ">=")
    rep.add("estimate_fraction", mono["fraction_ok"], 0.99, ">=", required_slack=mono["required_slack"])
    rep.add("form_floor", mono["form_floor"], 0.0, ">=")

    smooth = dm.DomainState(d, cfg["smooth_amplitude"] * shape.values)
    slog = dm.evolve_domain(smooth, op, cfg["dt"], cfg["sigma"], cfg["smooth_t_max"], snapshot_stride=100)
    rep.data.update(smooth_summary=slog.summary())
    rep.add("smooth_energy_drift_per_time", slog.energy_drift(), 1e-8)
    rep.add("smooth_mass_drift_per_time", slog.mass_drift(), 1e-8)


SUITES = {
    "operator-identities": run_operator_identities,
    "virial-identity": virial_identity,
    "groundstate-thresholds": groundstate_thresholds,
    "supercritical-blowup": supercritical_blowup,
    "critical-blowup": critical_blowup,
    "domain-blowup": domain_blowup,
    "cutoff-certificate": cutoff_certificate,
}


def run_suite(name: str, **kw) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**kw)
