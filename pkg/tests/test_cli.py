import csv

import pytest

from ness_lab.cli import main, run_checks


def write(tmp_path, text):
    p = tmp_path / "run.toml"
    p.write_text(text)
    return p


SMALL = """
[chain]
n_levels = 6
[driving]
sigma = [1.0]
seeds = [0]
epsilon = [0.5, 5.0]
flag_epsilon = 0.5
[run]
figures = {figures}
"""


def test_run_and_plot(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.format(figures="true"))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    assert (out / "ness.csv").exists()
    assert (out / "tsys_vs_eps.svg").exists()
    assert "4/4 instances solved" in capsys.readouterr().out
    assert main(["plot", "--in", str(out)]) == 0


def test_pictures_and_seed_base(tmp_path):
    cfg = write(tmp_path, SMALL.format(figures="false"))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--workers", "1",
                 "--pictures", "stochastic", "--seed-base", "7"]) == 0
    with open(out / "ness.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["picture"] for r in rows} == {"stochastic"}
    assert {r["seed"] for r in rows} == {"7"}
    assert not list(out.glob("*.svg"))


@pytest.mark.parametrize("text", ["[chain]\nn_levels = 1\n", "[bath\n", "[driving]\nsparsity = 0\n"])
def test_config_errors_exit_2(tmp_path, text, capsys):
    assert main(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_arguments_exit_2():
    assert main(["run", "--pictures", "classical"]) == 2
    assert main([]) == 2


def test_plot_schema_error_exit_2(tmp_path):
    (tmp_path / "ear_vs_eps.csv").write_text("picture,sigma\n")
    assert main(["plot", "--in", str(tmp_path)]) == 2


def test_plot_empty_directory_warns(tmp_path, capsys):
    assert main(["plot", "--in", str(tmp_path)]) == 0
    assert "nothing to plot" in capsys.readouterr().err


def test_partial_failure_exit_1(tmp_path, monkeypatch):
    import ness_lab.sweep as sweep

    def broken(*a, **k):
        raise RuntimeError("no convergence")

    monkeypatch.setattr(sweep, "solve_quantum_ness", broken)
    cfg = write(tmp_path, SMALL.format(figures="false"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--workers", "1"]) == 1


def test_check_command(capsys):
    results = run_checks()
    assert all(ok for _, ok, _ in results)
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == len(results)
