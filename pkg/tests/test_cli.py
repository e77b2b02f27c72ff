import os

import pytest

from acoustopt import cli, outputs
from acoustopt.errors import NumericalError

FAST = ["-s", "preset=reduced", "-s", "stage1_epochs=4", "-s", "stage2_max_epochs=2",
        "-s", "tuning_epochs=1"]


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_freqs(tmp_path, capsys):
    assert cli.main(["freqs", "-o", str(tmp_path), "--show", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "f_10 = 9.54 Hz" and lines[3] == "f_11 = 21.32 Hz"
    header, rows = outputs.read_csv(tmp_path / "freqs.csv")
    assert header == ["n", "m", "f_Hz"] and len(rows) > 10


def test_solve_empty_room(tmp_path, capsys):
    assert cli.main(["solve", "-o", str(tmp_path), "-s", "preset=reduced"]) == 0
    assert "110.0" in capsys.readouterr().out
    assert os.path.exists(tmp_path / "field_lp.pgm")


def test_optimize_outputs_and_manifest_rerun(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert cli.main(["optimize", "-o", str(first)] + FAST) == 0
    for name in ("history.csv", "design_stage1.pgm", "design_final.pgm", "field_lp.pgm",
                 "summary.csv", "manifest.txt"):
        assert os.path.exists(first / name), name
    header, rows = outputs.read_csv(first / "summary.csv")
    assert tuple(header) == outputs.SUMMARY_HEADER and len(rows[0]) == 6
    assert rows[0][3:] == ["3", "4", rows[0][5]]
    assert cli.main(["optimize", "-c", str(first / "manifest.txt"), "-o", str(second)]) == 0
    assert _read(first / "summary.csv") == _read(second / "summary.csv")
    assert _read(first / "design_final.pgm") == _read(second / "design_final.pgm")


def test_solve_reads_design_image(tmp_path, capsys):
    run = tmp_path / "run"
    assert cli.main(["optimize", "-o", str(run)] + FAST) == 0
    lp_eval = outputs.read_csv(run / "summary.csv")[1][0][2]
    capsys.readouterr()
    assert cli.main(["solve", "-o", str(tmp_path / "s"), "--design", str(run / "design_final.pgm")]
                    + FAST) == 0
    assert outputs.read_csv(tmp_path / "s" / "solve.csv")[1][0][2] == lp_eval


def test_bench_command(tmp_path):
    args = ["bench", "-o", str(tmp_path), "-s", "bench_guesses=3", "-s", "bench_epochs=20",
            "-s", "bench_width=25", "-s", "bench_alpha_grid=1e-3, 1e-2"]
    assert cli.main(args) == 0
    header, rows = outputs.read_csv(tmp_path / "bench_summary.csv")
    assert rows[0][:4] == ["rosenbrock", "25", "adam", "3"]
    assert len(outputs.read_csv(tmp_path / "bench_runs.csv")[1]) == 3
    assert len(outputs.read_csv(tmp_path / "bench_traces.csv")[1]) == 21


def test_exit_codes(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("frequency = 69.43\nq_stage1 = 2\nn_v = 5\n")
    assert cli.main(["solve", "-c", str(cfg), "-o", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "line 3: n_v=5 does not divide the 432x216 voxel grid" in capsys.readouterr().err
    assert cli.main(["solve", "-c", str(tmp_path / "none.cfg")]) == cli.EXIT_IO
    assert cli.main(["solve", "-s", "nope=1"]) == cli.EXIT_CONFIG

    def boom(cfg, args):
        raise NumericalError("diverged", epoch=3)

    monkeypatch.setitem(cli.COMMANDS, "solve", (boom, ""))
    assert cli.main(["solve"]) == cli.EXIT_NUMERICAL
    assert "epoch 3: diverged" in capsys.readouterr().err


def test_bad_usage_exits_with_config_code(capsys):
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG
    assert cli.main(["solve", "--nope"]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
