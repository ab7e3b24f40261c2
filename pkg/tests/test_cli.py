import csv

import pytest

from dtfl import cli, experiment
from dtfl.errors import ConvergenceError

SMALL = ["--set", "n_clients=6", "--set", "n_selected=3", "--set", "samples_per_client=200",
         "--set", "n_val=200", "--set", "n_test=300"]


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    return tmp_path


def test_solve_prints_decision(outdir, capsys):
    assert cli.main(["solve", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "selected=" in out and "total=" in out


def test_simulate_writes_csv_into_output_dir(outdir, capsys):
    assert cli.main(["simulate", "--rounds", "2", "--seed", "1", *SMALL]) == 0
    path = outdir / "simulate_proposed_seed1.csv"
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 2
    assert list(rows[0]) == experiment.MetricsRow.columns()


def test_simulate_is_byte_identical(outdir):
    a, b = outdir / "a.csv", outdir / "b.csv"
    assert cli.main(["simulate", "--rounds", "2", "--out", str(a), *SMALL]) == 0
    assert cli.main(["simulate", "--rounds", "2", "--out", str(b), *SMALL]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_zero_rounds_header_only(outdir):
    assert cli.main(["simulate", "--rounds", "0"]) == 0
    text = (outdir / "simulate_proposed_seed0.csv").read_text()
    assert text.splitlines() == [",".join(experiment.MetricsRow.columns())]


def test_config_file_and_flag_precedence(outdir, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("seed = 5\nrounds = 1\nscheme = no_dt\n")
    assert cli.main(["simulate", "--config", str(cfg), "--seed", "6", *SMALL]) == 0
    assert (outdir / "simulate_no_dt_seed6.csv").exists()


def test_sweep_command(outdir, capsys):
    code = cli.main(["sweep", "--axis", "b", "--values", "1", "2", "--schemes", "proposed",
                     "oma", "--seeds", "2"])
    assert code == 0
    rows = list(csv.DictReader((outdir / "sweep_b.csv").open()))
    assert len(rows) == 2 * 2 * 2
    assert "b=1: proposed=" in capsys.readouterr().out


def test_figures_written(outdir):
    pytest.importorskip("matplotlib")
    assert cli.main(["simulate", "--rounds", "2", "--figure", *SMALL]) == 0
    assert (outdir / "simulate_proposed_seed0.png").stat().st_size > 0
    assert cli.main(["sweep", "--axis", "dn", "--values", "1", "2", "--seeds", "1",
                     "--figure"]) == 0
    assert (outdir / "sweep_dn.png").stat().st_size > 0


def test_infeasible_exit_code(outdir, capsys):
    assert cli.main(["solve", "--set", "t_max=0.01"]) == cli.EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().err


def test_bad_input_exit_code(outdir, capsys):
    assert cli.main(["solve", "--set", "bogus=1"]) == cli.EXIT_BAD_INPUT
    assert cli.main(["simulate", "--config", str(outdir / "missing.cfg")]) == cli.EXIT_BAD_INPUT


def test_nonconvergence_exit_code(outdir, monkeypatch, capsys):
    def stuck(*args, **kwargs):
        raise ConvergenceError("stuck", [])

    monkeypatch.setattr(experiment, "allocate", stuck)
    assert cli.main(["solve"]) == cli.EXIT_NO_CONVERGENCE
    assert "did not converge" in capsys.readouterr().err


def test_selftest_quick(outdir, capsys):
    assert cli.main(["selftest", "--quick"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 7 and all(line.startswith("PASS") for line in out)
