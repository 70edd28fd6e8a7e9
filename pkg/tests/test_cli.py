import json
import subprocess
import sys

import pytest

from thermovisco import cli
from thermovisco import materials as mat
from thermovisco.config import builtin_config
from thermovisco.mechanics import StepFailure
from thermovisco.outputs import SCHEMAS, read_csv

EQUILIBRIUM = str(builtin_config("equilibrium"))


def write_config(tmp_path, body):
    path = tmp_path / "case.ini"
    path.write_text(body)
    return str(path)


def test_run_equilibrium(tmp_path, capsys):
    out = tmp_path / "eq"
    assert cli.main(["run", EQUILIBRIUM, str(out)]) == cli.EXIT_OK
    assert "run ok" in capsys.readouterr().out
    schema, rows = read_csv(out / "ledger.csv")
    assert schema == SCHEMAS["ledger"]
    for col in ("res_internal", "res_mech_identity", "drift_total"):
        assert max(abs(float(r[col])) for r in rows) <= 1e-12
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] and manifest["seed"] == 0
    assert all(manifest["invariants"].values())
    assert (out / "fields_k00000.csv").exists() and (out / "config.ini").exists()
    assert set(manifest["outputs"].values()) <= set(SCHEMAS.values())


def test_run_rejects_indivisible_steps(tmp_path, capsys):
    cfg = write_config(tmp_path, "[scheme]\nT = 0.1\nh = 1/40\ntau = 1/100\n")
    assert cli.main(["run", cfg, str(tmp_path / "out")]) == cli.EXIT_CONFIG
    assert "h/tau" in capsys.readouterr().err


def test_run_rejects_unknown_key(tmp_path, capsys):
    cfg = write_config(tmp_path, "[scheme]\nT = 0.1\nfoo = 1\n")
    assert cli.main(["run", cfg, str(tmp_path / "out")]) == cli.EXIT_CONFIG
    assert "foo" in capsys.readouterr().err


def test_usage_errors_are_config_errors(capsys):
    assert cli.main(["run"]) == cli.EXIT_CONFIG
    assert cli.main(["study", EQUILIBRIUM, "out", "--mode", "space"]) == cli.EXIT_CONFIG
    assert cli.main(["--version"]) == cli.EXIT_OK


def test_step_failure_exit_code(tmp_path, monkeypatch, capsys):
    def failing(*args, **kwargs):
        raise StepFailure("line search failed", {"residual": 1.0})

    monkeypatch.setattr("thermovisco.scheme.solve_mech_step", failing)
    out = tmp_path / "fail"
    assert cli.main(["run", EQUILIBRIUM, str(out)]) == cli.EXIT_STEP
    diag = json.loads((out / "failure.json").read_text())
    assert diag["step"] == 1 and diag["phase"] == "mechanical"
    assert "step failure" in capsys.readouterr().err


def test_verify_default_seed_passes_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["verify", "--out", str(a)]) == cli.EXIT_OK
    first = capsys.readouterr().out
    assert "FAIL" not in first and first.count("PASS") >= 40
    assert cli.main(["verify", "--out", str(b)]) == cli.EXIT_OK
    assert capsys.readouterr().out == first
    assert a.read_bytes() == b.read_bytes()


def test_verify_detects_sign_error_in_stress(monkeypatch, capsys):
    original = mat.grad_Wel
    monkeypatch.setattr(mat, "grad_Wel", lambda F, mp=mat.MaterialParams(): -original(F, mp))
    assert cli.main(["verify", "--inputs", "1", "--starts", "200"]) == cli.EXIT_INVARIANT
    captured = capsys.readouterr()
    assert "FAIL grad_Wel" in captured.out
    assert "grad_Wel" in captured.err.splitlines()[0]


def test_study_tau_mode(tmp_path, capsys):
    cfg = write_config(tmp_path, "[scheme]\nT = 0.05\ntau = 1/160\nh = 1/20\nn = 8\nkappa = 0\n"
                                 "[initial]\ny0prime_amplitude = 1\n")
    out = tmp_path / "study"
    code = cli.main(["study", cfg, str(out), "--mode", "tau", "--levels", "2"])
    printed = capsys.readouterr().out
    assert code == cli.EXIT_OK, printed
    assert "PASS drift_ratio" in printed
    schema, rows = read_csv(out / "study.csv")
    assert schema == SCHEMAS["study"] and len(rows) == 2
    assert json.loads((out / "study_criteria.json").read_text())["drift_ratio"] is True


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "thermovisco.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_backend_flag(tmp_path, backend):
    from thermovisco import kernels
    if backend == "compiled" and not kernels.compiled_available():
        pytest.skip("compiled kernels not built")
    out = tmp_path / backend
    assert cli.main(["--backend", backend, "run", EQUILIBRIUM, str(out)]) == cli.EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["backend"] == backend
