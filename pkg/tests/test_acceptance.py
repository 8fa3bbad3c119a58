"""Acceptance criteria 1-9 at their stated tolerances; one pass/fail line per criterion.

Each criterion is a selection of named checks from the suites. Suites are run
once per session and shared (conservation reuses the virial and domain runs).
"""

from functools import lru_cache

from fracvirial import suites


@lru_cache(maxsize=None)
def suite(name):
    if name == "operator-equivalence":
        return suites.operator_equivalence()
    if name == "plancherel-weight":
        return suites.plancherel_identity()
    return suites.run_suite(name)


def _fmt(c):
    return f"{c.name}={c.value:.4g} ({c.relation} {c.tolerance:g})"


def judge(lines, number, title, picks):
    """picks: (suite name, check names or None for all). Records the line and asserts."""
    checks = []
    for name, wanted in picks:
        rep = suite(name)
        checks += [c for c in rep.checks if wanted is None or c.name in wanted]
        missing = set(wanted or ()) - {c.name for c in rep.checks}
        assert not missing, f"suite {name} lacks checks {sorted(missing)}"
    failed = [c for c in checks if not c.passed]
    status = "PASS" if not failed else "FAIL"
    shown = failed if failed else checks
    line = f"criterion {number} {title}: {status}  " + "; ".join(_fmt(c) for c in shown)
    lines.append(line)
    print(line)
    assert not failed, line


def test_operator_equivalence(acceptance_lines):
    judge(acceptance_lines, 1, "operator equivalence", [("operator-equivalence", None)])


def test_plancherel_weight_identity(acceptance_lines):
    judge(acceptance_lines, 2, "Plancherel weight identity", [("plancherel-weight", None)])


def test_virial_identity(acceptance_lines):
    judge(acceptance_lines, 3, "virial identity",
          [("virial-identity", {"min_halving_ratio", "terminal_relative_error", "no_blowup_flag",
                                "runtime_seconds"})])


def test_ground_state_certificate(acceptance_lines):
    judge(acceptance_lines, 4, "ground-state certificate", [("groundstate-thresholds", None)])


def test_cutoff_certificate(acceptance_lines):
    judge(acceptance_lines, 5, "cutoff certificate", [("cutoff-certificate", None)])


def test_supercritical_blowup(acceptance_lines):
    judge(acceptance_lines, 6, "supercritical blowup", [("supercritical-blowup", None)])


def test_l2_critical_blowup(acceptance_lines):
    judge(acceptance_lines, 7, "L2-critical blowup", [("critical-blowup", None)])


def test_domain_suite(acceptance_lines):
    rep = suite("domain-blowup")
    own = {c.name for c in rep.checks} - {"smooth_energy_drift_per_time", "smooth_mass_drift_per_time"}
    judge(acceptance_lines, 8, "domain suite", [("domain-blowup", own)])


def test_conservation_on_non_blowup_runs(acceptance_lines):
    judge(acceptance_lines, 9, "conservation",
          [("virial-identity", {"energy_drift_per_time", "mass_drift_per_time"}),
           ("domain-blowup", {"smooth_energy_drift_per_time", "smooth_mass_drift_per_time"})])
