import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from romaccel.cli import (CSV_HEADER, ExperimentConfig, emit_csv, main, read_config_file,
                          read_linear_file, run_experiment, table_report)
from romaccel.continuation import StageOutcome
from romaccel.errors import ConfigError
from romaccel.records import RunRecord


def run(cfg):
    out, err = io.StringIO(), io.StringIO()
    status, res = run_experiment(cfg, out, err)
    return status, res, out.getvalue(), err.getvalue()


def test_emit_csv_single_record(tmp_path):
    p = tmp_path / "a.csv"
    emit_csv([RunRecord(1, 3, 0.1, 0.5, 0.25, 1e-7, 0.05)], p)
    text = p.read_bytes().decode("utf-8")
    assert text == ("outer,inner,residual,relative_residual,step_size,diff,b\n"
                    "1,3,0.10000000000000001,0.5,0.25,9.9999999999999995e-08,"
                    "0.050000000000000003\n")


def test_emit_csv_empty_cells_and_round_trip(tmp_path):
    p = tmp_path / "a.csv"
    recs = [RunRecord(0, 1, np.pi, 1.0), RunRecord(1, 2, np.e / 3, np.e / 3 / np.pi, 0.1)]
    emit_csv(recs, p)
    lines = p.read_text().splitlines()
    assert lines[1] == "0,1,3.1415926535897931,1,,,"
    rows = list(csv.reader(io.StringIO(p.read_text())))
    assert tuple(rows[0]) == CSV_HEADER
    assert float(rows[2][2]) == np.e / 3
    assert float(rows[2][3]) == np.e / 3 / np.pi


def test_emit_csv_requires_records(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "x.csv")


def test_table_report():
    assert table_report([]).count("\n") == 1
    text = table_report([StageOutcome(0.05, True, 2, 1.4918e-10, 1e-10)])
    row = text.splitlines()[1]
    assert row.split() == ["0.05", "2", "1.492e-10"]
    fail = table_report([StageOutcome(0.5, False, 0, float("inf"), float("inf"),
                                      status="failed")])
    assert "diverged" in fail
    widths = {len(line) for line in text.splitlines()}
    assert len(widths) == 1


def test_riccati_plain_status_zero(tmp_path):
    cfg = ExperimentConfig("riccati", "plain", b_schedule=[0.05], tol=1e-6,
                           output_path=str(tmp_path / "r.csv"))
    status, res, out, _ = run(cfg)
    assert status == 0
    assert res.records[-1].diff_norm < 1e-6
    assert "converged" in out


def test_saddle1_anderson_beats_plain():
    plain = run(ExperimentConfig("saddle1", "plain", depth=15, max_outer=20))[1]
    acc = run(ExperimentConfig("saddle1", "anderson", depth=15, max_outer=20))[1]
    assert acc.relative_residual < plain.relative_residual


def test_saddle2_two_direction_beats_one():
    one = run(ExperimentConfig("saddle2", "sampled", depth=15, max_outer=60))[1]
    two = run(ExperimentConfig("saddle2", "sampled", depth=15, max_outer=60,
                               directions="two"))[1]
    assert two.relative_residual < one.relative_residual


def test_exit_status_budget_exhausted():
    status, *_ = run(ExperimentConfig("saddle1", "plain", max_outer=2))
    assert status == 2


def test_exit_status_bad_path():
    status, _, _, err = run(ExperimentConfig("riccati", "plain", b_schedule=[0.05],
                                             output_path="/nonexistent/dir/x.csv"))
    assert status == 1 and "cannot write" in err


@pytest.mark.parametrize("kw, msg", [
    (dict(experiment="riccati", method="cg"), "linear experiments"),
    (dict(experiment="saddle1", step_policy="approx_cauchy"), "surrogate"),
    (dict(experiment="saddle1", b_schedule=[0.1]), "riccati"),
    (dict(experiment="riccati", b_schedule=[0.2, 0.1]), "increasing"),
    (dict(experiment="riccati", method="nested", depth=1), "depth"),
    (dict(experiment="linear_file"), "--input"),
    (dict(experiment="saddle1", directions="two", step_policy="cauchy"), "conflicts"),
    (dict(experiment="nope"), "unknown experiment"),
])
def test_invalid_configs_rejected(kw, msg):
    status, _, _, err = run(ExperimentConfig(**kw))
    assert status == 1
    assert msg in err


def test_linear_file_round_trip(tmp_path):
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    p = tmp_path / "sys.txt"
    p.write_text("2 2\n4 1\n1 3\nrhs\n1 2\n")
    A2, b2 = read_linear_file(p)
    np.testing.assert_array_equal(A2, A)
    np.testing.assert_array_equal(b2, b)
    status, res, _, _ = run(ExperimentConfig("linear_file", "anderson", depth=3,
                                             input_path=str(p), tol=1e-10))
    assert status == 0


@pytest.mark.parametrize("text", ["2 2\n1 2 3\nrhs\n1 2\n", "2 2\n1 2 3 4\nb\n1 2\n",
                                  "2 2\n1 2 3 4\nrhs\n1\n", "x y\n"])
def test_linear_file_malformed(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ConfigError):
        read_linear_file(p)


def test_config_file_and_flag_override(tmp_path, monkeypatch, capsys):
    conf = tmp_path / "run.cfg"
    conf.write_text("# demo\nexperiment = riccati\nmethod=plain\nb = 0.05, 0.1\nseed=3\n")
    vals = read_config_file(conf)
    assert vals["b_schedule"] == [0.05, 0.1] and vals["seed"] == 3
    out = tmp_path / "o.csv"
    assert main(["--config", str(conf), "--b", "0.05", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert all(r.endswith(",0.050000000000000003") for r in rows[1:])


def test_config_file_unknown_key(tmp_path):
    conf = tmp_path / "bad.cfg"
    conf.write_text("colour=blue\n")
    with pytest.raises(ConfigError):
        read_config_file(conf)
    assert main(["--config", str(conf)]) == 1


def test_seed_from_environment(tmp_path, monkeypatch):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    base = ["--experiment", "riccati", "--method", "plain", "--b", "0.05"]
    monkeypatch.setenv("ROM_ACCEL_SEED", "7")
    main(base + ["--out", str(a)])
    main(base + ["--out", str(b), "--seed", "7"])
    monkeypatch.delenv("ROM_ACCEL_SEED")
    main(base + ["--out", str(c)])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


@pytest.mark.parametrize("argv", [
    ["--experiment", "riccati", "--method", "nested", "--depth", "7", "--b", "1", "--b", "2"],
    ["--experiment", "saddle2", "--method", "sampled", "--directions", "two",
     "--max-outer", "30"],
    ["--experiment", "saddle1", "--method", "kaczmarz_par", "--max-outer", "5"],
])
def test_csv_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(argv + ["--out", str(a)])
    main(argv + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().endswith(b"\n")


def test_relative_column_consistent(tmp_path):
    p = tmp_path / "r.csv"
    main(["--experiment", "saddle1", "--method", "anderson", "--max-outer", "10",
          "--out", str(p)])
    rows = list(csv.DictReader(p.open()))
    r0 = float(rows[0]["residual"])
    assert float(rows[0]["relative_residual"]) == 1.0
    for row in rows:
        assert float(row["relative_residual"]) == pytest.approx(float(row["residual"]) / r0,
                                                                rel=1e-15)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "romaccel", "--experiment", "riccati",
                           "--method", "plain", "--b", "0.5"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "diverged" in proc.stdout
