import json

import numpy as np
import pytest

from conftest import K_REF
from src.cli.commands import EXIT_FAILED, EXIT_INPUT, EXIT_OK, main
from src.cli.schema import ModelFile


def _run(tmp_path, *argv):
    return main(["--log-dir", str(tmp_path / "logs"), *argv])


def _read_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)


def test_build_reference_model(tmp_path, model_file):
    out = tmp_path / "build.json"
    assert _run(tmp_path, "build", model_file(), "--out", str(out)) == EXIT_OK
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["command"] == "build"
    assert all(v["passed"] for v in report["verdicts"])
    np.testing.assert_allclose(report["outputs"]["D"], 0.21639534 * np.eye(2), atol=1e-8)
    np.testing.assert_allclose(report["outputs"]["V_th"], K_REF * np.eye(2), atol=1e-12)
    assert report["modes"][0]["nbar"] == pytest.approx(0.5819767, abs=1e-7)
    assert report["provenance"]["tolerances"]["audit"] == pytest.approx(1e-9)


def test_build_writes_run_log(tmp_path, model_file):
    _run(tmp_path, "build", model_file(), "--out", str(tmp_path / "build.json"))
    logs = list((tmp_path / "logs" / "build_runs").glob("build_*.log"))
    assert len(logs) == 1
    assert "[PASS] thermal_commutation" in logs[0].read_text(encoding="utf-8")


@pytest.mark.parametrize(
    "patch",
    [
        {"gamma": [0.0]},
        {"B": [[1.0, 0.5], [0.0, 1.0]]},
        {"gamma": [0.2, 0.3]},
        {"beta": -1.0},
        {"unknown_field": 1},
    ],
)
def test_build_rejects_invalid_model(tmp_path, model_file, reference_model, patch):
    assert _run(tmp_path, "build", model_file({**reference_model, **patch})) == EXIT_INPUT


def test_build_rejects_missing_hessian(tmp_path, model_file, reference_model):
    data = {k: v for k, v in reference_model.items() if k != "B"}
    assert _run(tmp_path, "build", model_file(data)) == EXIT_INPUT


def test_build_rejects_indefinite_hessian(tmp_path, model_file, reference_model):
    data = {**reference_model, "B": [[1.0, 0.0], [0.0, -1.0]]}
    assert _run(tmp_path, "build", model_file(data)) == EXIT_INPUT


def test_missing_model_file(tmp_path):
    assert _run(tmp_path, "build", str(tmp_path / "nope.json")) == EXIT_INPUT


def test_evolve_reaches_thermal_covariance(tmp_path, model_file):
    out = tmp_path / "traj.csv"
    code = _run(tmp_path, "evolve", model_file(), "--tmax", "80", "--samples", "5", "--dt", "0.01", "--out", str(out))
    assert code == EXIT_OK
    header = out.read_text(encoding="utf-8").splitlines()[:2]
    assert header[0].startswith("# gds_thermo ") and header[0].endswith("trajectory v1")
    assert header[1] == "t,mean_q1,mean_p1,V_q1_q1,V_q1_p1,V_p1_p1,min_symplectic_eigenvalue"
    rows = _read_csv(out)
    assert rows.shape == (5, 7)
    np.testing.assert_allclose(rows[:, 0], [0.0, 20.0, 40.0, 60.0, 80.0])
    assert rows[-1, 3] == pytest.approx(1.0819767, abs=1e-6)
    assert rows[-1, 5] == pytest.approx(1.0819767, abs=1e-6)
    assert np.all(rows[:, -1] >= 0.5 - 1e-9)


def test_evolve_from_thermal_state_is_constant(tmp_path, model_file):
    out = tmp_path / "traj.csv"
    _run(tmp_path, "evolve", model_file(), "--v0", "thermal", "--tmax", "5", "--samples", "3", "--dt", "0.01", "--out", str(out))
    rows = _read_csv(out)
    np.testing.assert_allclose(rows[:, 3], K_REF, atol=1e-10)


def test_evolve_initial_mean_decays(tmp_path, model_file):
    out = tmp_path / "traj.csv"
    code = _run(
        tmp_path, "evolve", model_file(), "--mean0", "[1.0, 0.0]", "--tmax", "10", "--samples", "2", "--dt", "0.01", "--out", str(out)
    )
    assert code == EXIT_OK
    rows = _read_csv(out)
    assert np.hypot(rows[-1, 1], rows[-1, 2]) == pytest.approx(np.exp(-1.0), rel=1e-10)


def test_evolve_initial_covariance_file(tmp_path, model_file):
    v0 = tmp_path / "v0.json"
    v0.write_text(json.dumps([[3.0, 0.0], [0.0, 3.0]]), encoding="utf-8")
    out = tmp_path / "traj.csv"
    assert _run(tmp_path, "evolve", model_file(), "--v0", str(v0), "--tmax", "1", "--samples", "2", "--out", str(out)) == EXIT_OK
    assert _read_csv(out)[0, 3] == pytest.approx(3.0)

    v0.write_text(json.dumps(np.eye(4).tolist()), encoding="utf-8")
    assert _run(tmp_path, "evolve", model_file(), "--v0", str(v0), "--out", str(out)) == EXIT_INPUT


def test_evolve_rejects_zero_step(tmp_path, model_file):
    with pytest.raises(SystemExit) as exc:
        _run(tmp_path, "evolve", model_file(), "--dt", "0", "--out", str(tmp_path / "t.csv"))
    assert exc.value.code == 2


def test_evolve_rejects_unphysical_initial_covariance(tmp_path, model_file):
    v0 = tmp_path / "v0.json"
    v0.write_text(json.dumps((0.1 * np.eye(2)).tolist()), encoding="utf-8")
    out = tmp_path / "traj.csv"
    assert _run(tmp_path, "evolve", model_file(), "--v0", str(v0), "--tmax", "1", "--out", str(out)) == EXIT_INPUT
    assert not out.exists()
    logs = list((tmp_path / "logs" / "evolve_runs").glob("evolve_*.log"))
    assert "not a bona fide covariance" in logs[0].read_text(encoding="utf-8")


@pytest.mark.parametrize(
    "argv",
    [
        ("sweep", "--jobs", "0"),
        ("sweep", "--points", "0"),
        ("sweep", "--points", "-3"),
        ("evolve", "--samples", "0"),
        ("oracle", "--cutoff", "0"),
        ("oracle", "--cutoff", "many"),
    ],
)
def test_non_positive_counts_are_usage_errors(tmp_path, model_file, argv):
    command, *rest = argv
    with pytest.raises(SystemExit) as exc:
        _run(tmp_path, command, model_file(), *rest, "--out", str(tmp_path / "o.csv"))
    assert exc.value.code == 2
    assert not (tmp_path / "o.csv").exists()


def test_evolve_diffusive_regime(tmp_path, model_file, reference_model):
    path = model_file({**reference_model, "regime": "diffusive", "cbar": [0.1]})
    out = tmp_path / "traj.csv"
    assert _run(tmp_path, "evolve", path, "--out", str(out)) == EXIT_FAILED
    assert not out.exists()
    code = _run(tmp_path, "evolve", path, "--allow-nonstationary", "--tmax", "2", "--samples", "3", "--out", str(out))
    assert code == EXIT_OK
    # unbounded growth of the covariance
    assert np.all(np.diff(_read_csv(out)[:, 3]) > 0)


def test_audit_qdbc_model(tmp_path, model_file):
    out = tmp_path / "audit.json"
    assert _run(tmp_path, "audit", model_file(), "--out", str(out)) == EXIT_OK
    report = json.loads(out.read_text(encoding="utf-8"))
    names = [v["name"] for v in report["verdicts"]]
    assert names == ["thermal_commutation", "congruence", "eigenoperators"]
    assert report["residuals"]["closed_form"] <= 1e-9


def test_audit_commuting_effective_hamiltonian(tmp_path, model_file, reference_model):
    ok = model_file({**reference_model, "B_prime": [[2.0, 0.0], [0.0, 2.0]]}, "ok.json")
    assert _run(tmp_path, "audit", ok, "--out", str(tmp_path / "ok_report.json")) == EXIT_OK
    bad = model_file({**reference_model, "B_prime": [[1.0, 0.0], [0.0, 2.0]]}, "bad.json")
    assert _run(tmp_path, "audit", bad, "--out", str(tmp_path / "bad_report.json")) == EXIT_FAILED


def test_audit_explicit_matrices(tmp_path, model_file):
    good = {"n": 1, "D": (0.2 * K_REF * np.eye(2)).tolist(), "C": [[0.0, -0.1], [0.1, 0.0]], "V": (K_REF * np.eye(2)).tolist()}
    assert _run(tmp_path, "audit", model_file(good, "good.json"), "--out", str(tmp_path / "g.json")) == EXIT_OK

    broken = {"n": 1, "D": np.eye(2).tolist(), "C": [[0.0, -0.3], [0.3, 0.0]], "V": [[1.5, 0.0], [0.0, 0.8]]}
    out = tmp_path / "b.json"
    assert _run(tmp_path, "audit", model_file(broken, "broken.json"), "--out", str(out)) == EXIT_FAILED
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["residuals"]["comm_JV_JD"] > 1e-3


def test_audit_singular_dissipation_note(tmp_path, model_file):
    data = {"n": 1, "D": np.eye(2).tolist(), "C": np.zeros((2, 2)).tolist(), "V": np.eye(2).tolist()}
    out = tmp_path / "s.json"
    assert _run(tmp_path, "audit", model_file(data, "singular.json"), "--out", str(out)) == EXIT_FAILED
    report = json.loads(out.read_text(encoding="utf-8"))
    assert "closed-form covariance inapplicable: JC is singular" in report["notes"]
    assert report["residuals"]["closed_form"] is None


def test_sweep_table(tmp_path, model_file):
    out = tmp_path / "sweep.csv"
    code = _run(tmp_path, "sweep", model_file(), "--beta-range", "0.1", "10", "--points", "6", "--jobs", "2", "--out", str(out))
    assert code == EXIT_OK
    assert out.read_text(encoding="utf-8").splitlines()[1] == "beta,k_1,norm_D,norm_C,high_T_rel_error,low_T_error"
    rows = _read_csv(out)
    np.testing.assert_allclose(rows[:, 0], np.geomspace(0.1, 10.0, 6))
    np.testing.assert_allclose(rows[:, 1], 0.5 / np.tanh(0.5 * rows[:, 0]), rtol=1e-12)
    assert np.all(np.diff(rows[:, 1]) < 0) and np.all(rows[:, 1] > 0.5)
    assert rows[0, 4] < 1e-3
    assert rows[-1, 5] < 1e-4
    np.testing.assert_allclose(rows[:, 3], 0.1, rtol=1e-10)


def test_sweep_rejects_reversed_range(tmp_path, model_file):
    assert _run(tmp_path, "sweep", model_file(), "--beta-range", "2", "1", "--out", str(tmp_path / "s.csv")) == EXIT_INPUT


def test_oracle_reference(tmp_path, model_file):
    out = tmp_path / "oracle.json"
    assert _run(tmp_path, "oracle", model_file(), "--tmax", "2", "--out", str(out)) == EXIT_OK
    report = json.loads(out.read_text(encoding="utf-8"))
    assert [v["name"] for v in report["verdicts"]] == ["moment_deviation", "gibbs_residual", "gns_detailed_balance"]
    assert report["notes"] == []


def test_oracle_two_modes_needs_flag(tmp_path, model_file):
    data = {"n": 2, "B": np.eye(4).tolist(), "beta": 1.0, "gamma": [0.2, 0.2]}
    assert _run(tmp_path, "oracle", model_file(data)) == EXIT_INPUT


def test_oracle_cutoff_budget(tmp_path, model_file):
    data = {"n": 2, "B": np.eye(4).tolist(), "beta": 1.0, "gamma": [0.2, 0.2]}
    assert _run(tmp_path, "oracle", model_file(data), "--experimental", "--cutoff", "17") == EXIT_INPUT


def test_generate_is_reproducible(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(tmp_path, "generate", "--modes", "2", "--seed", "11", "--out", str(first)) == EXIT_OK
    assert _run(tmp_path, "generate", "--modes", "2", "--seed", "11", "--out", str(second)) == EXIT_OK
    assert first.read_text(encoding="utf-8") == second.read_text(encoding="utf-8")
    model = ModelFile.model_validate_json(first.read_text(encoding="utf-8"))
    assert model.n == 2 and len(model.gamma) == 2
    assert _run(tmp_path, "build", str(first), "--out", str(tmp_path / "r.json")) == EXIT_OK


def test_generate_requires_seed(tmp_path):
    with pytest.raises(SystemExit):
        _run(tmp_path, "generate", "--out", str(tmp_path / "m.json"))


def test_schema(tmp_path, capsys):
    assert _run(tmp_path, "schema") == EXIT_OK
    out = capsys.readouterr().out
    assert '"gamma"' in out and '"lindblad_vectors"' in out


def test_invalid_tolerance_environment(tmp_path, model_file, monkeypatch):
    monkeypatch.setenv("GDS_THERMO_TOL", "not-a-number")
    assert _run(tmp_path, "build", model_file()) == EXIT_INPUT
    monkeypatch.setenv("GDS_THERMO_TOL", "-1")
    assert _run(tmp_path, "build", model_file()) == EXIT_INPUT


def test_tolerance_environment_reaches_report(tmp_path, model_file, monkeypatch):
    monkeypatch.setenv("GDS_THERMO_TOL", "1e-7")
    out = tmp_path / "build.json"
    assert _run(tmp_path, "build", model_file(), "--out", str(out)) == EXIT_OK
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["provenance"]["tolerances"]["audit"] == pytest.approx(1e-7)
