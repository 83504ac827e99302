import csv
import json

import numpy as np
import pytest

from qoidesign.cli import EXIT_CONFIG, EXIT_EMPTY, EXIT_NUMERICAL, EXIT_OK, main

LINEAR = {
    "model": {"kind": "linear", "matrix": [[0.5, 0.5], [2.5, 0.5], [-0.2, 0.3]]},
    "sampling": {"num_samples": 60, "seed": 3},
    "jacobian": {"method": "exact-linear", "sites": 5},
    "design": {"m": 2, "omega": 0.5, "widths": 0.2},
    "inverse": {"lambda_ref": [0.5, 0.5], "widths": 0.3},
}


def _write(tmp_path, raw, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh, delimiter=";"))


def test_optimize_linear(tmp_path):
    out = tmp_path / "out"
    assert main(["optimize", _write(tmp_path, LINEAR), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["winners"]["min-distance"]["subset"] == [1, 2]
    assert summary["winners"]["min-measure"]["subset"] == [0, 1]
    assert summary["winners"]["min-skewness"]["subset"] == [0, 2]
    assert summary["config"]["design"]["widths"] == 0.2
    rows = _rows(out / "scores.csv")
    assert rows[0] == ["subset", "avg_measure", "avg_skewness", "distance",
                       "distance_table_convention"]
    assert len(rows) == 4 and rows[1][0] == "1,2"
    # shortest round-trip floats
    for row in rows[1:]:
        for cell in row[1:]:
            assert repr(float(cell)) == cell
    assert (out / "pareto.csv").exists() and (out / "config.json").exists()


def test_objective_flag(tmp_path):
    out = tmp_path / "out"
    assert main(["optimize", _write(tmp_path, LINEAR), "--out", str(out),
                 "--objective", "min-skewness"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["selected"]["subset"] == [0, 2]


def test_invalid_subset_size_writes_nothing(tmp_path, capsys):
    raw = dict(LINEAR, design={"m": 4})
    out = tmp_path / "never"
    assert main(["optimize", _write(tmp_path, raw), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert "design.m" in capsys.readouterr().err


def test_bad_json_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["optimize", str(path)]) == EXIT_CONFIG


def test_determinism_and_provenance(tmp_path):
    cfg = _write(tmp_path, LINEAR)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["invert", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["invert", cfg, "--out", str(b)]) == EXIT_OK
    names = sorted(p.name for p in a.iterdir() if p.suffix == ".csv")
    assert names == ["inverse.csv", "marginals_0_1.csv"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # the echo alone reproduces the outputs
    c = tmp_path / "c"
    assert main(["invert", str(a / "config.json"), "--out", str(c)]) == EXIT_OK
    for name in names:
        assert (a / name).read_bytes() == (c / name).read_bytes()


def test_invert_identity_full_box(tmp_path):
    raw = {"model": {"kind": "linear", "matrix": [[1, 0], [0, 1]]},
           "sampling": {"num_samples": 50, "seed": 1},
           "jacobian": {"method": "exact-linear", "sites": 5},
           "inverse": {"subset": [0, 1], "q_ref": [0.5, 0.5], "widths": 1.0}}
    out = tmp_path / "out"
    assert main(["invert", _write(tmp_path, raw), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "inverse.csv")
    assert rows[0] == ["sample_index", "lambda_0", "lambda_1", "p_lambda", "cell_index"]
    p = np.array([float(r[3]) for r in rows[1:]])
    np.testing.assert_allclose(p, 1 / 50, rtol=1e-14)
    marg = _rows(out / "marginals_0_1.csv")
    assert sum(float(r[-1]) for r in marg[1:]) == pytest.approx(1.0, abs=1e-10)


def test_invert_reference_recorded(tmp_path):
    out = tmp_path / "out"
    assert main(["invert", _write(tmp_path, LINEAR), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "inverse_summary.json").read_text())
    assert summary["subset"] == [1, 2]
    np.testing.assert_allclose(summary["q_ref"], [1.5, 0.05])
    assert summary["reference_cell_probability"] > 0


def test_invert_seeded_reference(tmp_path):
    raw = dict(LINEAR, inverse={"widths": 0.3})
    out = tmp_path / "out"
    assert main(["invert", _write(tmp_path, raw), "--out", str(out), "--seed", "11"]) == EXIT_OK
    summary = json.loads((out / "inverse_summary.json").read_text())
    lam = np.array(summary["lambda_ref"])
    assert np.all((lam >= 0) & (lam <= 1))


def test_empty_support_exit_code(tmp_path, capsys):
    raw = dict(LINEAR, inverse={"subset": [0, 1], "q_ref": [50.0, 50.0], "widths": 0.1})
    assert main(["invert", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == EXIT_EMPTY
    assert "empty support" in capsys.readouterr().err


def test_predict_with_qoi_column(tmp_path):
    raw = dict(LINEAR, inverse={"subset": [0, 1], "lambda_ref": [0.3, 0.6], "widths": 0.3,
                                "prediction": 2})
    out = tmp_path / "out"
    assert main(["predict", _write(tmp_path, raw), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "prediction.csv")
    assert rows[0] == ["record", "lower", "upper", "probability"]
    interval, full = rows[1], rows[2]
    assert interval[0] == "interval" and full[0] == "full_interval"
    assert float(full[1]) <= float(interval[1]) <= float(interval[2]) <= float(full[2])
    bins = [r for r in rows if r[0] == "bin"]
    assert len(bins) == 20
    assert sum(float(r[3]) for r in bins) == pytest.approx(1.0)


def test_predict_without_functional(tmp_path):
    assert main(["predict", _write(tmp_path, LINEAR), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_converge(tmp_path):
    raw = {"model": {"kind": "linear", "matrix": [[1, 0], [0, 1]]},
           "convergence": {"sample_counts": [50, 200, 800, 3200], "repetitions": 2,
                           "num_reference": 5000}}
    out = tmp_path / "out"
    assert main(["converge", _write(tmp_path, raw), "--out", str(out), "--threads", "2"]) == EXIT_OK
    rows = _rows(out / "convergence.csv")
    assert rows[0] == ["map", "N", "mean_error", "stderr", "repetitions"]
    assert len(rows) == 9
    assert {r[0] for r in rows[1:]} == {"identity", "skewed"}
    slopes = _rows(out / "slopes.csv")
    assert slopes[0] == ["map", "slope"] and len(slopes) == 3


def test_converge_single_repetition(tmp_path):
    raw = {"model": {"kind": "linear", "matrix": [[1, 0], [0, 1]]},
           "convergence": {"sample_counts": [20, 40], "repetitions": 1, "num_reference": 1000}}
    out = tmp_path / "out"
    assert main(["converge", _write(tmp_path, raw), "--out", str(out)]) == EXIT_OK
    assert all(r[3] == "" for r in _rows(out / "convergence.csv")[1:])


def test_converge_unknown_map(tmp_path, capsys):
    raw = {"model": {"kind": "linear", "matrix": [[1, 0], [0, 1]]},
           "convergence": {"maps": [{"name": "banana"}]}}
    assert main(["converge", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "convergence.maps[0].name" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    # every sample on one line: affine neighbourhoods are degenerate
    raw = {"model": {"kind": "linear", "matrix": [[1, 0], [0, 1]]},
           "domain": {"lower": [0, 0], "upper": [1, 1e-300]},
           "sampling": {"num_samples": 40}, "jacobian": {"k": 5, "sites": 3}}
    assert main(["optimize", _write(tmp_path, raw), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
    assert "sample" in capsys.readouterr().err


def test_threads_flag_validated(tmp_path):
    assert main(["optimize", _write(tmp_path, LINEAR), "--threads", "0"]) == EXIT_CONFIG


def test_plate_smoke(tmp_path):
    raw = {"model": {"kind": "plate", "cells": 12, "steps": 8, "num_saved": 4, "levels": [1, 4]},
           "sampling": {"num_samples": 40, "seed": 2},
           "jacobian": {"k": 10, "sites": 10},
           "design": {"widths": 0.2},
           "inverse": {"widths": 0.5, "prediction": "model"}}
    out = tmp_path / "out"
    assert main(["invert", _write(tmp_path, raw), "--out", str(out), "--threads", "2"]) == EXIT_OK
    summary = json.loads((out / "inverse_summary.json").read_text())
    sides = {q["side"] for q in summary["qoi"]}
    assert summary["qoi"][0]["level"] in (1, 4) and sides <= {"left", "right"}
    assert (out / "prediction.csv").exists()
