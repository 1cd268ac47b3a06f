import json
import math
import subprocess
import sys

import pytest
import tomli
import tomli_w

from immergrid.cli import main, read_csv, sweep, write_csv
from immergrid.config import bundled_config


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def payload(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


def test_quadrature_check_area(tmp_path, capsys):
    assert run(tmp_path, "quadrature-check", "--depth", "3") == 0
    out = capsys.readouterr().out
    assert out.startswith("#schema=1 columns=area,")
    row = read_csv(tmp_path / "star2d_quadrature.csv")[0]
    assert float(row["area"]) == pytest.approx(0.255 * math.pi, rel=1e-3)
    assert int(row["depth"]) == 3


def test_solve_artifacts(tmp_path, capsys):
    assert run(tmp_path, "solve") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["converged"] and 0 < rec["dofs"] <= 33 * 33
    meta = json.loads((tmp_path / "star2d_solve.json").read_text())
    assert meta["dofs"] == rec["dofs"] and meta["iterations"] == rec["iterations"]
    assert meta["config"]["basis"]["degree"] == 2
    assert set(meta["timings"]) >= {"assembly", "solve", "total"}
    for name in ("residuals", "solution", "field"):
        assert (tmp_path / f"star2d_{name}.csv").read_text().startswith("#schema=1 ")
    res = read_csv(tmp_path / "star2d_residuals.csv")
    assert len(res) == rec["iterations"] and float(res[-1]["relative_residual"]) <= 1e-10


def test_missing_degree_is_config_error(tmp_path, capsys):
    cfg = bundled_config().to_dict()
    del cfg["basis"]["degree"]
    path = tmp_path / "case.toml"
    path.write_text(tomli_w.dumps(cfg))
    assert run(tmp_path, "solve", str(path)) == 2
    assert "basis.degree" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["solve", "--set", "mesh.colour=1"],
                                  ["solve", "--set", "basis.degree=0"],
                                  ["solve", "--set", "geometry.levelset='disc(0, 0'"],
                                  ["solve", "nonexistent"]])
def test_config_errors_exit_2(tmp_path, argv):
    assert run(tmp_path, *argv) == 2


def test_solver_failure_exit_1(tmp_path, capsys):
    assert run(tmp_path, "solve", "--maxit", "2") == 1
    assert "NotConverged" in capsys.readouterr().err


def test_rerun_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "solve", "--set", "mesh.resolution=[8, 8]") == 0
        assert run(d, "spectrum", "--set", "mesh.resolution=[8, 8]", "--mode", "0") == 0
    for name in ("residuals", "solution", "field", "spectrum", "mode0"):
        assert payload(a / f"star2d_{name}.csv") == payload(b / f"star2d_{name}.csv")


def test_spectrum_power_matches_dense(tmp_path, capsys):
    base = ["spectrum", "--set", "mesh.resolution=[8, 8]"]
    assert run(tmp_path / "d", *base) == 0
    dense = json.loads(capsys.readouterr().out)
    assert run(tmp_path / "p", *base, "--method", "power",
               "--set", "spectrum.power_iters=1000") == 0
    power = json.loads(capsys.readouterr().out)
    assert power["lambda_min"] == pytest.approx(dense["lambda_min"], rel=1e-6)
    # the top of the V-cycle spectrum is a tight cluster below one
    assert power["lambda_max"] == pytest.approx(dense["lambda_max"], rel=1e-4)
    assert len(read_csv(tmp_path / "p" / "star2d_spectrum.csv")) == 2


def test_spectrum_power_reports_no_convergence(tmp_path, capsys):
    # Jacobi's smallest eigenvalue is far below the rest of a wide spectrum
    assert run(tmp_path, "spectrum", "--set", "mesh.resolution=[8, 8]", "--operator", "jacobi",
               "--method", "power") == 1
    assert "NoConvergence" in capsys.readouterr().err


def test_print_config_lists_defaults(capsys):
    assert main(["print-config", "--set", "solver.tol=1e-6"]) == 0
    tree = tomli.loads(capsys.readouterr().out)
    assert tree["solver"]["tol"] == 1e-6
    assert tree["smoother"]["filter_ratio"] == 1e-16
    assert tree["spectrum"]["power_iters"] == 200


def test_sweep_rows(tmp_path, capsys):
    code = run(tmp_path, "sweep", "--axis", "levels", "--values", "1,2,3",
               "--set", "mesh.resolution=[8, 8]")
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    rows = read_csv(tmp_path / "star2d_sweep_levels.csv")
    assert [r["value"] for r in rows] == ["1", "2", "3"]
    assert all(r["status"] == "ok" and int(r["iterations"]) > 0 for r in rows)


def test_sweep_failed_point_continues(tmp_path):
    cfg = bundled_config().replace(mesh__resolution=[8, 8],
                                   output__directory=str(tmp_path))
    rows = sweep(cfg, "levels", [2, 5])
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] == "error:ResolutionError"
    assert main(["sweep", "--axis", "levels", "--values", "2,5", "--set",
                 "mesh.resolution=[8, 8]", "--out", str(tmp_path)]) == 1


def test_grid_sweep_keeps_geometry_and_jobs_agree(tmp_path):
    cfg = bundled_config().replace(output__directory=str(tmp_path))
    seq = sweep(cfg, "grid", [8, 16], spectra=True)
    par = sweep(cfg, "grid", [8, 16], spectra=True, jobs=2)
    assert seq == par
    assert all(r["status"] == "ok" and r["lambda_max"] <= 1 + 1e-8 for r in seq)


def test_write_read_round_trip(tmp_path):
    path = write_csv(tmp_path / "t.csv", ("a", "b"), [{"a": 0.1 + 0.2, "b": True}])
    row = read_csv(path)[0]
    assert float(row["a"]) == 0.1 + 0.2 and row["b"] == "1"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "immergrid", "quadrature-check",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("#schema=1")
