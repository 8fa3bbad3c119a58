"""Command-line front end: fracvirial {verify,groundstate,evolve,domain,cutoff,suite}.

Settings come from an optional INI file (one section per subcommand, key = value)
and are overridden by command-line flags. Every run writes manifest.json with the
resolved configuration and the package version next to its outputs.

Exit codes: 0 pass, 1 check failure, 2 usage or configuration error,
3 numerical-instability abort.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import cutoff as co
from . import domain as dm
from . import evolve as ev
from . import groundstate as gs
from .errors import (ConsistencyError, ConstructionError, ConvergenceError, FracVirialError, InstabilityError,
                     LeakageError, QuadratureError)
from .fracops import FieldOnGrid, FracParams, Grid, balakrishnan_apply, frac_laplacian, frac_seminorm, weighted_gradient_integral
from .io import write_field, write_field_csv, write_table
from .suites import SUITES, run_suite

log = logging.getLogger("fracvirial")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_UNSTABLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# --- argument parsing ---------------------------------------------------------

def _common(p):
    p.add_argument("--config", type=Path, help="INI file; the section named after the subcommand is read")
    p.add_argument("--output-dir", type=Path, default=None, help="directory for outputs (default ./fracvirial-out)")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracvirial", description="Virial and blowup laboratory for focusing fractional NLS.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="multiplier vs resolvent quadrature and the Plancherel weight identity")
    _common(v)
    v.add_argument("--N", type=int)
    v.add_argument("--s", type=float)
    v.add_argument("--L", type=float)
    v.add_argument("--M", type=int)
    v.add_argument("--fields", type=int)
    v.add_argument("--tol", type=float)

    g = sub.add_parser("groundstate", help="Petviashvili ground state and blowup thresholds")
    _common(g)
    g.add_argument("--N", type=int)
    g.add_argument("--s", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--L", type=float)
    g.add_argument("--M", type=int)
    g.add_argument("--tol", type=float)

    e = sub.add_parser("evolve", help="periodic-box evolution with virial monitors")
    _common(e)
    e.add_argument("--N", type=int)
    e.add_argument("--s", type=float)
    e.add_argument("--sigma", type=float)
    e.add_argument("--amp", type=float, help="Gaussian amplitude")
    e.add_argument("--amp-factor", type=float, help="multiple of the zero-energy amplitude (overrides --amp)")
    e.add_argument("--width", type=float)
    e.add_argument("--dt", type=float)
    e.add_argument("--tmax", type=float)
    e.add_argument("--R", type=float, action="append", help="cutoff radius (repeatable)")
    e.add_argument("--L", type=float)
    e.add_argument("--M", type=int)
    e.add_argument("--snapshot-stride", type=int)
    e.add_argument("--rhs-stride", type=int)
    e.add_argument("--conservation-tol", type=float)
    e.add_argument("--noise", type=float, help="relative size of a seeded smooth multiplicative perturbation of u0")

    d = sub.add_parser("domain", help="interval problem with the exterior Dirichlet operator")
    _common(d)
    d.add_argument("--a", type=float)
    d.add_argument("--b", type=float)
    d.add_argument("--M", type=int)
    d.add_argument("--s", type=float)
    d.add_argument("--sigma", type=float)
    d.add_argument("--amp", type=float)
    d.add_argument("--amp-factor", type=float)
    d.add_argument("--width", type=float)
    d.add_argument("--dt", type=float)
    d.add_argument("--tmax", type=float)

    c = sub.add_parser("cutoff", help="cutoff profile table and admissible eta")
    _common(c)
    c.add_argument("--N", type=int)
    c.add_argument("--s", type=float)
    c.add_argument("--R", type=float)

    s = sub.add_parser("suite", help="run one acceptance suite")
    _common(s)
    s.add_argument("name", choices=sorted(SUITES))
    return ap


DEFAULTS = {
    "verify": dict(N=2, s=None, L=32.0, M=256, fields=4, tol=1e-6, seed=0),
    "groundstate": dict(N=2, s=None, sigma=None, L=64.0, M=1024, tol=1e-10, seed=0),
    "evolve": dict(N=2, s=None, sigma=None, amp=0.6, amp_factor=None, width=2.0, dt=5e-4, tmax=0.5, R=[4.0],
                   L=48.0, M=256, snapshot_stride=20, rhs_stride=0, conservation_tol=1e-8, noise=0.0, seed=0),
    "domain": dict(a=-1.0, b=1.0, M=512, s=None, sigma=None, amp=None, amp_factor=1.2, width=0.6, dt=1e-4,
                   tmax=1.0, seed=0),
    "cutoff": dict(N=2, s=None, R=1.0, seed=0),
    "suite": dict(seed=0),
}

# keys that must come from a flag or the config file
REQUIRED = {"verify": ("s",), "groundstate": ("s", "sigma"), "evolve": ("s", "sigma"), "domain": ("s", "sigma"),
            "cutoff": ("s",), "suite": ()}


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float) or like is None:  # unset keys are all floats
        return float(value)
    if isinstance(like, list):
        return [float(v) for v in value.replace(",", " ").split()]
    return value


def _read_ini(path: Path) -> configparser.ConfigParser:
    # [DEFAULT] is read as an ordinary section so its keys do not leak into the others
    parser = configparser.ConfigParser(default_section="\0")
    parser.optionxform = str   # keep N, L, M, R distinct from lowercase keys
    if not parser.read(path):
        raise UsageError(f"cannot read config file {path}")
    return parser


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS[args.command])
    out = args.output_dir
    if getattr(args, "config", None):
        parser = _read_ini(args.config)
        if out is None and parser.has_option("DEFAULT", "output_dir"):
            out = Path(parser.get("DEFAULT", "output_dir"))
        if parser.has_section(args.command):
            for key, raw in parser.items(args.command):
                key = key.replace("-", "_")
                if key not in cfg:
                    raise UsageError(f"unknown key {key!r} in section [{args.command}]")
                try:
                    cfg[key] = _coerce(raw, cfg[key])
                except ValueError as exc:
                    raise UsageError(f"bad value for {key}: {raw!r}") from exc
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    missing = [k for k in REQUIRED[args.command] if cfg[k] is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + k for k in missing))
    if args.command == "suite":
        cfg["name"] = args.name
    cfg["output_dir"] = str(out or Path("fracvirial-out"))
    return cfg


# --- subcommands ---------------------------------------------------------------

def cmd_verify(cfg, out: Path) -> int:
    g = Grid(cfg["N"], cfg["L"], cfg["M"])
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    ok = True
    for i in range(cfg["fields"]):
        u = g.random_bandlimited(rng, band=min(8.0, 0.5 * math.pi / g.spacing))
        a = frac_laplacian(u, cfg["s"]).values
        b = balakrishnan_apply(u, cfg["s"]).values
        op_err = float(np.linalg.norm(a - b) / np.linalg.norm(a))
        exact = cfg["s"] * frac_seminorm(u, cfg["s"]) ** 2
        pl_err = abs(weighted_gradient_integral(u, cfg["s"]) - exact) / exact
        ok &= op_err <= cfg["tol"] and pl_err <= cfg["tol"]
        rows.append([i, op_err, pl_err])
    write_table(out / "verify.csv", ["field", "operator_rel_error", "plancherel_rel_error"], rows)
    _write_json(out / "verify.json", {"passed": ok, "tolerance": cfg["tol"],
                                      "max_operator_error": max(r[1] for r in rows),
                                      "max_plancherel_error": max(r[2] for r in rows)})
    print(f"verify: {'pass' if ok else 'FAIL'} (max operator error {max(r[1] for r in rows):.2e}, "
          f"max Plancherel error {max(r[2] for r in rows):.2e})")
    return EXIT_PASS if ok else EXIT_FAIL


def _add_thresholds(report: dict, Q) -> None:
    try:
        th = gs.thresholds(Q)
        report.update(c_gn=th.c_gn, k=[th.k_const, th.k_norms, th.k_energy_mass], k_spread=th.spread,
                      y_max=th.y_max, f_at_max=th.f_at_max)
    except ConsistencyError as exc:
        report["threshold_error"] = str(exc)


def cmd_groundstate(cfg, out: Path) -> int:
    p = FracParams(cfg["s"], cfg["sigma"], cfg["N"])
    Q = gs.solve_ground_state(p, Grid(cfg["N"], cfg["L"], cfg["M"]), tol=cfg["tol"])
    r1, r2 = gs.pohozaev_residuals(Q)
    report = {"iterations": Q.iterations, "residual": Q.residual, "mass": Q.mass, "grad_norm_sq": Q.grad_norm_sq,
              "lp_norm": Q.lp_norm, "energy": Q.energy, "pohozaev_r1": r1, "pohozaev_r2": r2,
              "positive_and_decreasing": gs.is_positive_and_decreasing(Q), "boundary_mass": Q.boundary_mass}
    if p.s_c <= 0:
        report["thresholds"] = "not defined for s_c <= 0"
    else:
        _add_thresholds(report, Q)
    write_field(out / "groundstate.bin", Q.profile, p.s, p.sigma)
    write_field_csv(out / "groundstate.csv", Q.profile)
    _write_json(out / "groundstate.json", report)
    print(f"groundstate: {Q.iterations} iterations, residual {Q.residual:.2e}, Pohozaev ({r1:.2e}, {r2:.2e})")
    return EXIT_FAIL if "threshold_error" in report else EXIT_PASS


def cmd_evolve(cfg, out: Path) -> int:
    p = FracParams(cfg["s"], cfg["sigma"], cfg["N"])
    g = Grid(cfg["N"], cfg["L"], cfg["M"])
    shape = ev.apply_dealias(g.gaussian(1.0, cfg["width"]))
    if cfg["noise"]:
        rng = np.random.default_rng(cfg["seed"])
        nu = g.random_bandlimited(rng, band=min(2.0, 0.3 * math.pi / g.spacing)).values
        # multiplicative so the perturbation stays under the Gaussian envelope
        shape = ev.apply_dealias(FieldOnGrid(g, shape.values * (1.0 + cfg["noise"] * nu / np.max(np.abs(nu)))))
    if cfg["amp_factor"] is not None:
        amp = cfg["amp_factor"] * ev.negative_energy_amplitude(shape, p)
    else:
        amp = cfg["amp"]
    u0 = amp * shape
    config = ev.EvolveConfig(dt=cfg["dt"], t_max=cfg["tmax"], R_list=tuple(cfg["R"]),
                             snapshot_stride=cfg["snapshot_stride"], rhs_stride=cfg["rhs_stride"],
                             conservation_tol=cfg["conservation_tol"])
    try:
        run = ev.run(u0, config, p)
        status = EXIT_PASS
    except (InstabilityError, LeakageError) as exc:
        run = exc.log
        status = EXIT_UNSTABLE
        log.error("%s", exc)
    write_table(out / "run.csv", run.header(), run.rows())
    summary = run.summary()
    summary["verdict"] = "blowup-flagged" if run.blowup_flag else ("aborted" if status else "no-flag")
    summary["amplitude"] = amp
    if run.blowup_flag and run.R_list:
        fits = {}
        for R in run.R_list:
            try:
                fits[R] = ev.fit_collapse(run.times, run.m_r[R], p.s)
            except FracVirialError as exc:
                fits[R] = {"rejected": str(exc)}
        summary["fit"] = fits
    _write_json(out / "summary.json", summary)
    print(f"evolve: {summary['verdict']} after {run.steps} steps, t = {summary['t_end']:.4g}, "
          f"energy drift {summary['energy_drift_per_time']:.2e}/time")
    return status


def cmd_domain(cfg, out: Path) -> int:
    d = dm.IntervalDomain(cfg["a"], cfg["b"], cfg["M"])
    op = dm.assemble(d, cfg["s"])
    write_table(out / "eigenvalues.csv", ["k", "lambda"], ([k + 1, float(v)] for k, v in enumerate(op.eigenvalues)))
    center = 0.5 * (cfg["a"] + cfg["b"])
    half = cfg["width"] * 0.5 * (cfg["b"] - cfg["a"])
    z = (d.x - center) / half
    shape = dm.DomainState(d, np.where(np.abs(z) < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - z * z, 1e-300)), 0.0))
    if cfg["amp"] is not None:
        amp = cfg["amp"]
    else:
        amp = cfg["amp_factor"] * dm.negative_energy_amplitude_omega(shape, op, cfg["sigma"])
    u0 = dm.DomainState(d, amp * shape.values)
    rng = np.random.default_rng(cfg["seed"])
    poho = [dm.pohozaev_estimate_check(dm.random_bump(d, rng), op) for _ in range(100)]
    _write_json(out / "pohozaev.json", {"initial_state": dm.pohozaev_estimate_check(u0, op),
                                         "random_all_ok": all(c["ok"] for c in poho),
                                         "random_min_slack_over_form": min(c["slack"] / c["form"] for c in poho)})
    status = EXIT_PASS
    try:
        run = dm.evolve_domain(u0, op, cfg["dt"], cfg["sigma"], cfg["tmax"], snapshot_stride=2,
                               conservation_tol=1e-6)
    except InstabilityError as exc:
        run = exc.log
        status = EXIT_UNSTABLE
    write_table(out / "run.csv", run.header(), run.rows())
    summary = run.summary()
    summary["amplitude"] = amp
    if len(run.times) >= 3:
        summary["monotonicity"] = dm.monotonicity_omega(run)
    _write_json(out / "summary.json", summary)
    print(f"domain: lambda_1 = {op.eigenvalues[0]:.8g}, blowup flag {run.blowup_flag}, t = {summary['t_end']:.4g}")
    return status


def cmd_cutoff(cfg, out: Path) -> int:
    prof = co.build_profile()
    c = co.RescaledCutoff(prof, cfg["R"])
    eta = co.find_eta(prof, cfg["s"], cfg["N"])
    co.write_profile_csv(out / "cutoff.csv", c, eta, cfg["s"], cfg["N"])
    (out / "profile.json").write_text(prof.to_json() + "\n")
    margins = co.phi1_margins(c, cfg["N"])
    psi = co.verify_psi_inequality(c, eta, cfg["s"], cfg["N"])
    ok = min(margins.values()) >= -1e-12 and psi.min_margin >= 0
    _write_json(out / "cutoff.json", {"eta_star": eta, "phi_margins": margins, "psi_min_margin": psi.min_margin,
                                      "psi_argmin": psi.argmin, "sup_norms": co.sup_norms(c), "passed": ok})
    print(f"cutoff: eta* = {eta:.6g}, psi margin {psi.min_margin:.3e}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_suite(cfg, out: Path) -> int:
    kw = {"seed": cfg["seed"]} if cfg["name"] in ("operator-identities", "domain-blowup") else {}
    rep = run_suite(cfg["name"], **kw)
    _write_json(out / f"suite-{cfg['name']}.json", rep.as_dict())
    for c in rep.checks:
        print(f"  {'pass' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} {c.relation} {c.tolerance:g}")
    bad = rep.first_failure()
    if bad is not None:
        print(f"suite {cfg['name']}: FAIL at {bad.name}")
        return EXIT_FAIL
    print(f"suite {cfg['name']}: pass ({rep.seconds:.1f} s)")
    return EXIT_PASS


COMMANDS = {"verify": cmd_verify, "groundstate": cmd_groundstate, "evolve": cmd_evolve, "domain": cmd_domain,
            "cutoff": cmd_cutoff, "suite": cmd_suite}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"fracvirial: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", {"command": args.command, "version": _version(), "config": cfg})
    try:
        return COMMANDS[args.command](cfg, out)
    except (InstabilityError, LeakageError, ConvergenceError, QuadratureError) as exc:
        print(f"fracvirial: numerical abort: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ConstructionError as exc:
        print(f"fracvirial: check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (FracVirialError, ValueError) as exc:
        print(f"fracvirial: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
