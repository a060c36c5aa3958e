import json

import numpy as np
import pytest

from rnm_insertion import __version__, cli
from rnm_insertion.errors import NumericalError, PreconditionError
from rnm_insertion.io import read_csv


def run(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path / "run")])


def load(tmp_path, name="run"):
    with open(tmp_path / f"{name}.report.json") as fh:
        report = json.load(fh)
    with open(tmp_path / f"{name}.manifest.json") as fh:
        manifest = json.load(fh)
    return read_csv(tmp_path / f"{name}.csv"), report, manifest


def test_parse_grid_row_major():
    g = cli.parse_grid("-1:1:3")
    assert g.size == 9 and g[0] == -1 - 1j and g[1] == 0 - 1j and g[3] == -1 + 0j
    assert cli.parse_grid("0:1:2,5:6:3").size == 6
    for bad in ("1:2", "a:b:c", "0:1:0"):
        with pytest.raises(PreconditionError):
            cli.parse_grid(bad)


def test_negative_values_after_flags():
    assert cli._normalise_argv(["--c", "-0.5,0,0.5", "--grid", "-3:3:5", "--k", "2"]) == \
        ["--c=-0.5,0,0.5", "--grid=-3:3:5", "--k", "2"]


def test_outputs_and_manifest(tmp_path):
    assert run(tmp_path, "density", "--k", "1", "--c", "1", "--n", "400", "--grid", "-2:2:9") == 0
    (header, rows), report, manifest = load(tmp_path)
    assert header == ["re", "im", "value"] and len(rows) == 81
    z = complex(float(rows[5][0]), float(rows[5][1]))
    assert float(rows[5][2]) == pytest.approx(1 - np.exp(-abs(z) ** 2), abs=1e-13)
    assert report["kind"] == "finite" and report["command"] == "density"
    assert manifest["artifact_version"] == __version__ and manifest["command"] == "density"
    assert manifest["params"]["n"] == "400" and manifest["params"]["grid"] == "-2:2:9"
    raw = (tmp_path / "run.csv").read_bytes()
    assert b"\r" not in raw


def test_manifest_round_trip_is_byte_identical(tmp_path):
    args = ["balayage", "--k", "2", "--c", "0.5", "--n", "120", "--grid", "-1:1:7"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(["balayage", "--config", str(tmp_path / "a.manifest.json"), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.report.json").read_bytes() == (tmp_path / "b.report.json").read_bytes()
    ma = json.loads((tmp_path / "a.manifest.json").read_text())
    mb = json.loads((tmp_path / "b.manifest.json").read_text())
    ma["params"].pop("out"), mb["params"].pop("out")
    assert ma == mb


def test_flat_config_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# model\nk = 2\nc = 0.5\nn = 50\npoints = 0.3,0.6\n")
    assert cli.main(["density", "--config", str(cfg), "--n", "80", "--out", str(tmp_path / "run")]) == 0
    _, report, manifest = load(tmp_path)
    assert report["model"]["k"] == 2 and report["model"]["n"] == 80 and report["model"]["c"] == 0.5
    cfg.write_text("bogus = 1\n")
    assert cli.main(["density", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


@pytest.mark.parametrize("cmd", [
    ["clt", "--k", "1,2", "--c", "1,0.5", "--n", "300", "--trials", "400", "--seed", "5"],
    ["density", "--k", "2", "--c", "-0.5", "--grid", "-2:2:41"],
    ["ml-eval", "--a", "0.5", "--b", "1.5", "--grid", "-3:3:21"],
])
def test_thread_count_independence(tmp_path, cmd):
    assert cli.main(cmd + ["--threads", "1", "--out", str(tmp_path / "t1")]) == 0
    assert cli.main(cmd + ["--threads", "4", "--out", str(tmp_path / "t4")]) == 0
    assert (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t4.csv").read_bytes()


def test_thread_default_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    ns = cli.resolve(["density", "--points", "0.5"])
    assert ns.threads == 3
    assert cli.resolve(["density", "--points", "0.5", "--threads", "2"]).threads == 2


def test_validation_exit_code(tmp_path, capsys):
    assert run(tmp_path, "density", "--k", "0", "--points", "1") == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["exit"] == 2 and err["error"] == "validation" and err["command"] == "density"
    assert run(tmp_path, "density", "--unknown-flag") == 2
    assert run(tmp_path, "bulk-check", "--k", "2", "--n", "2000", "--fraction", "0.6") == 2
    assert not (tmp_path / "run.csv").exists()


def test_numerical_exit_code(tmp_path, capsys, monkeypatch):
    def boom(ns):
        raise NumericalError("quadrature not converged")

    monkeypatch.setitem(cli.HANDLERS, "density", boom)
    assert run(tmp_path, "density", "--points", "1") == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and json.loads(err[0])["exit"] == 3


def test_figure1(tmp_path):
    assert run(tmp_path, "figure1", "--k", "2", "--c", "-0.5,0,0.5", "--xmax", "2.5") == 0
    (header, rows), report, _ = load(tmp_path)
    assert header == ["x", "R_c=-0.5", "R_c=0", "R_c=0.5", "laplace_Q0"]
    assert float(rows[0][0]) == pytest.approx(1e-3)
    assert (tmp_path / "run.png").stat().st_size > 1000
    assert run(tmp_path, "figure1", "--no-plot", "--num", "10") == 0


def test_figure2(tmp_path):
    assert run(tmp_path, "figure2", "--grid", "-1.2:1.2:25") == 0
    (header, rows), report, _ = load(tmp_path)
    assert header == ["re", "im", "rho_pure_log", "rho_green"] and len(rows) == 625
    assert report["green"]["rim_mass_near"] > report["green"]["rim_mass_far"]
    assert (tmp_path / "run.png").exists()


def test_ward_kernel_sample_and_bulk(tmp_path):
    assert cli.main(["ward", "--k", "1", "--c", "1", "--points", "0.5,1+1j", "--out", str(tmp_path / "w")]) == 0
    _, rep, _ = load(tmp_path, "w")
    assert rep["max_residual"] < 1e-3 and rep["reduction_ok"]
    assert cli.main(["kernel", "--k", "2", "--c", "0.5", "--points", "1", "--w", "0.5j", "--mass-one",
                     "--out", str(tmp_path / "k")]) == 0
    (header, rows), rep, _ = load(tmp_path, "k")
    assert abs(float(rows[0][4])) < 1e-10
    assert cli.main(["sample", "--n", "30", "--seed", "4", "--out", str(tmp_path / "s")]) == 0
    (header, rows), rep, _ = load(tmp_path, "s")
    assert len(rows) == 30 and rep["seed"] == 4
    assert cli.main(["sample", "--n", "30", "--seed", "4", "--out", str(tmp_path / "s2")]) == 0
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()
    assert cli.main(["sample", "--mode", "mcmc", "--n", "6", "--steps", "20000", "--burn-in", "5000",
                     "--out", str(tmp_path / "m")]) == 0
    assert cli.main(["bulk-check", "--k", "1", "--c", "1", "--n", "500", "--points", "0.5", "--no-region-check",
                     "--out", str(tmp_path / "b")]) == 0
    _, rep, _ = load(tmp_path, "b")
    assert rep["max_abs_deviation"] < 1e-3


def test_plot_flag(tmp_path):
    assert run(tmp_path, "density", "--k", "2", "--c", "0.5", "--grid", "-1:1:11", "--plot") == 0
    assert (tmp_path / "run.png").exists()


def test_help_exits_cleanly(capsys):
    assert cli.main(["--help"]) == 0
