"""CLI verbs, flags and exit codes."""

import numpy as np
import pytest

from comprsma.cli import main


def test_run_verb_writes_csv(tmp_path, capsys):
    out = tmp_path / "run.csv"
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_bs = 1\nn_users = 2\nn_antennas = 2\nepochs = 2\nkinds = rsma-ma\n")
    code = main(["run", "--config", str(cfg), "--trials", "1", "--out", str(out), "--seed", "3"])
    assert code == 0
    text = out.read_text()
    assert text.startswith("seed,kind,axis,axis_value,sum_rate_bps_hz")
    assert len(text.strip().split("\n")) == 2
    assert "rsma-ma" in capsys.readouterr().out


def test_sweep_verb_row_count(tmp_path):
    out = tmp_path / "sweep.csv"
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_bs = 1\nn_users = 2\nn_antennas = 2\nepochs = 2\nkinds = rsma-ma\n")
    code = main(
        [
            "sweep", "--config", str(cfg), "--axis", "power", "--values", "29,33",
            "--trials", "2", "--out", str(out),
        ]
    )
    assert code == 0
    assert len(out.read_text().strip().split("\n")) == 1 + 2 * 2


def test_oracle_verb(tmp_path):
    out = tmp_path / "oracle.csv"
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_bs = 1\nn_users = 1\nn_antennas = 2\nkinds = rsma-fpa\n")
    code = main(
        ["oracle", "--config", str(cfg), "--trials", "1", "--starts", "2", "--out", str(out)]
    )
    assert code == 0
    assert "pga-rsma-fpa" in out.read_text()


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("not_a_key = 1\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_sweep_without_axis_is_config_error():
    assert main(["sweep", "--trials", "1"]) == 2


def test_run_rejects_decreasing_values(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("axis = power\nvalues = 37,29\n")
    assert main(["sweep", "--config", str(cfg), "--trials", "1"]) == 2


def test_check_verb_passes(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
