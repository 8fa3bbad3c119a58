import json

import pytest

from fracvirial.cli import EXIT_FAIL, EXIT_PASS, EXIT_UNSTABLE, EXIT_USAGE, main


def run(tmp_path, *argv):
    return main([*argv, "--output-dir", str(tmp_path)])


def test_cutoff_writes_outputs_and_manifest(tmp_path):
    assert run(tmp_path, "cutoff", "--s", "0.8") == EXIT_PASS
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "cutoff"
    assert manifest["version"] == "0.1.0"
    assert manifest["config"]["s"] == 0.8
    report = json.loads((tmp_path / "cutoff.json").read_text())
    assert report["passed"] and report["eta_star"] > 0
    assert (tmp_path / "cutoff.csv").exists() and (tmp_path / "profile.json").exists()


def test_missing_s_is_usage_error(tmp_path):
    assert run(tmp_path, "cutoff") == EXIT_USAGE


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == EXIT_USAGE


def test_config_file_and_flag_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[verify]\ns = 0.6\nN = 1\nM = 128\nL = 8\nfields = 2\n")
    out = tmp_path / "out"
    assert main(["verify", "--config", str(ini), "--M", "64", "--output-dir", str(out)]) == EXIT_PASS
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert (cfg["s"], cfg["N"], cfg["M"], cfg["L"], cfg["fields"]) == (0.6, 1, 64, 8.0, 2)


def test_unknown_config_key_is_usage_error(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[cutoff]\ns = 0.8\nbogus = 1\n")
    assert main(["cutoff", "--config", str(ini), "--output-dir", str(tmp_path)]) == EXIT_USAGE


def test_default_section_sets_output_dir(tmp_path):
    ini = tmp_path / "run.ini"
    out = tmp_path / "from-ini"
    ini.write_text(f"[DEFAULT]\noutput_dir = {out}\n[cutoff]\ns = 0.9\n")
    assert main(["cutoff", "--config", str(ini)]) == EXIT_PASS
    assert (out / "cutoff.json").exists()


def test_verify_failure_exit_code(tmp_path):
    assert run(tmp_path, "verify", "--s", "0.7", "--N", "1", "--M", "64", "--L", "8", "--tol", "1e-30") == EXIT_FAIL


EVOLVE = ("evolve", "--s", "0.8", "--sigma", "1", "--L", "48", "--M", "128", "--dt", "1e-2", "--tmax", "0.1",
          "--R", "4", "--snapshot-stride", "2", "--noise", "0.01")


def test_evolve_is_byte_identical_for_same_seed(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main([*EVOLVE, "--seed", "3", "--output-dir", str(a)]) == EXIT_PASS
    assert main([*EVOLVE, "--seed", "3", "--output-dir", str(b)]) == EXIT_PASS
    assert main([*EVOLVE, "--seed", "4", "--output-dir", str(c)]) == EXIT_PASS
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()
    assert (a / "run.csv").read_bytes() != (c / "run.csv").read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["verdict"] == "no-flag"


def test_evolve_leakage_is_instability_exit(tmp_path):
    code = run(tmp_path, "evolve", "--s", "0.8", "--sigma", "1", "--L", "8", "--M", "64", "--width", "3",
               "--R", "0.5", "--tmax", "0.05", "--dt", "1e-2")
    assert code == EXIT_UNSTABLE


def test_groundstate_half_wave(tmp_path):
    code = run(tmp_path, "groundstate", "--N", "1", "--s", "0.5", "--sigma", "0.5", "--L", "2048", "--M", "32768")
    assert code == EXIT_PASS
    report = json.loads((tmp_path / "groundstate.json").read_text())
    assert abs(report["pohozaev_r1"]) < 1e-5
    assert report["thresholds"] == "not defined for s_c <= 0"


def test_domain_outputs(tmp_path):
    code = run(tmp_path, "domain", "--s", "0.8", "--sigma", "2", "--M", "64", "--tmax", "0.002", "--dt", "1e-4")
    assert code == EXIT_PASS
    for name in ("eigenvalues.csv", "run.csv", "pohozaev.json", "summary.json"):
        assert (tmp_path / name).exists()


@pytest.mark.parametrize("name", ["cutoff-certificate"])
def test_suite_report(tmp_path, name):
    assert run(tmp_path, "suite", name) == EXIT_PASS
    rep = json.loads((tmp_path / f"suite-{name}.json").read_text())
    assert rep["passed"]
