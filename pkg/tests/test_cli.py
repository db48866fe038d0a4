import json

import pytest

from stingstokes import cli
from stingstokes.linalg import SolverError


def test_quick_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res"
    assert cli.main(["solve", "--quick", "--out", str(out), "--no-timings", "--svg"]) == 0
    text = (out / "convergence.csv").read_text()
    lines = text.splitlines()
    assert lines[0].startswith("N,h,vel_h1_err")
    assert len(lines) == 3 and lines[1].startswith("4,") and lines[2].endswith(",")
    diag = json.loads((out / "diagnostics.json").read_text())
    assert set(diag) == {"crisscross:4", "crisscross:8"}
    for name in ("pressure_stages_crisscross_4.svg", "mesh_crisscross_8.svg", "convergence.svg"):
        assert (out / name).stat().st_size > 0
    assert "crisscross:8" in capsys.readouterr().out
    # a second run without timings is byte-identical
    out2 = tmp_path / "res2"
    assert cli.main(["solve", "--quick", "--out", str(out2), "--no-timings"]) == 0
    assert (out2 / "convergence.csv").read_text() == text


def test_json_table_and_perturbed(tmp_path):
    out = tmp_path / "j"
    assert cli.main(["solve", "--mesh", "crisscross:4", "--perturb", "0.05", "--seed", "2", "--table", "json", "--out", str(out)]) == 0
    data = json.loads((out / "convergence.json").read_text())
    assert data["rows"][0]["N"] == 4


def test_mesh_errors_exit_2(tmp_path, capsys):
    assert cli.main(["solve", "--mesh", "crisscross:1", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("v 0 0\nv 1 0\nv 1 1\nv 0 1\nt 0 1 2\nt 0 2 3\n")
    assert cli.main(["solve", "--mesh-file", str(bad), "--out", str(tmp_path)]) == 2
    assert "structure check failed" in capsys.readouterr().err
    assert cli.main(["solve", "--mesh-file", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 2


def test_bad_mesh_spec_is_usage_error():
    with pytest.raises(SystemExit):
        cli.main(["solve", "--mesh", "grid:4"])


def test_solver_failure_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SolverError("matrix not positive definite")

    monkeypatch.setattr(cli, "run_convergence", boom)
    assert cli.main(["solve", "--mesh", "crisscross:2", "--out", str(tmp_path)]) == 3
