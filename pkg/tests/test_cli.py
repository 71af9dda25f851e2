import json
import subprocess
import sys
import time

import numpy as np
import pytest

from robsure.cli import main
from robsure.simulate import ModelSpec, sample_elliptical_t


def write_matrix(path, X):
    lines = [",".join(f"x{j}" for j in range(X.shape[1]))]
    lines += [",".join(repr(float(v)) for v in row) for row in X]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_returns(path, X):
    lines = ["date," + ",".join(f"asset{j}" for j in range(X.shape[1]))]
    for t, row in enumerate(X):
        y, m = divmod(t, 12)
        lines.append(f"{1990 + y:04d}-{m + 1:02d}-01," + ",".join(f"{v:.10f}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


def eigen_example_data():
    """n = 10 observations whose covariance (divisor n) is exactly diag(4, 1)."""
    Z = np.random.default_rng(0).standard_normal((10, 2))
    Z -= Z.mean(axis=0)
    L = np.linalg.cholesky(Z.T @ Z / 10)
    return Z @ np.linalg.inv(L).T * [2.0, 1.0]


@pytest.fixture
def returns_csv(tmp_path):
    X = sample_elliptical_t(ModelSpec(p=5, d=1, nu=4.0, signal_vars=(5.0,)), 228, 0) * 0.05
    return write_returns(tmp_path / "returns.csv", X)


def tiny_config(**overrides):
    data = {
        "seed": 3,
        "replicates": 4,
        "cells": [{"p": 6, "d": 2, "n": 80, "nu": 2, "signal_range": [1, 3]}],
        "methods": [{"estimator": "cov", "criterion": "sure2"},
                    {"estimator": "hr", "criterion": "sure2", "rule": "cp"}],
    }
    data.update(overrides)
    return data


# estimate

def test_estimate_hand_example(tmp_path, capsys):
    X = eigen_example_data()
    inp = write_matrix(tmp_path / "x.csv", X)
    out = tmp_path / "curve.json"
    assert main(["estimate", "--input", str(inp), "--estimator", "cov", "--criterion", "sure2",
                 "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "1"
    doc = json.loads(out.read_text())
    np.testing.assert_allclose(doc["eigenvalues"], [4.0, 1.0], rtol=1e-12)
    np.testing.assert_allclose(doc["values"], [3.4, 23 / 15], rtol=1e-12)
    assert doc["d_hat_argmin"] == 1


def test_estimate_kind_mismatch(tmp_path, capsys):
    inp = write_matrix(tmp_path / "x.csv", np.random.default_rng(1).standard_normal((30, 3)))
    assert main(["estimate", "--input", str(inp), "--estimator", "tyler", "--criterion", "sure1"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("KindMismatch") and len(err.strip().splitlines()) == 1


def test_estimate_missing_input(tmp_path, capsys):
    assert main(["estimate", "--input", str(tmp_path / "none.csv")]) == 1
    assert "IoError" in capsys.readouterr().err


def test_estimate_collision(tmp_path, capsys):
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    inp = write_matrix(tmp_path / "x.csv", X)
    assert main(["estimate", "--input", str(inp), "--estimator", "cov"]) == 1
    assert "EigenvalueCollision" in capsys.readouterr().err


def test_unknown_flag_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--input", "x.csv", "--bogus"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    inp = write_matrix(tmp_path / "x.csv", eigen_example_data())
    proc = subprocess.run(
        [sys.executable, "-m", "robsure", "estimate", "--input", str(inp), "--estimator", "cov"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "1"


# simulate

def test_simulate_single_row(tmp_path):
    cfg = write_json(tmp_path / "c.json", tiny_config(replicates=1, methods=[{"estimator": "tyler", "criterion": "sure2"}]))
    out = tmp_path / "r.csv"
    assert main(["simulate", "--config", str(cfg), "--out-csv", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 2
    assert rows[1].split(",")[-1] in ("0.000000", "1.000000")


def test_simulate_threads_identical(tmp_path):
    cfg = write_json(tmp_path / "c.json", tiny_config())
    outs = {}
    for threads in (1, 8):
        csv_path, json_path = tmp_path / f"r{threads}.csv", tmp_path / f"r{threads}.json"
        assert main(["simulate", "--config", str(cfg), "--threads", str(threads),
                     "--out-csv", str(csv_path), "--out-json", str(json_path)]) == 0
        outs[threads] = (csv_path.read_bytes(), json_path.read_bytes())
    assert outs[1] == outs[8]


def test_simulate_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ROBSURE_THREADS", "3")
    from robsure.cli import build_parser
    args = build_parser().parse_args(["simulate", "--config", "c.json"])
    assert args.threads == 3


def test_simulate_record_timing(tmp_path):
    cfg = write_json(tmp_path / "c.json", tiny_config(replicates=1))
    out = tmp_path / "r.csv"
    assert main(["simulate", "--config", str(cfg), "--out-csv", str(out), "--record-timing"]) == 0
    assert out.read_text().splitlines()[0].endswith("mean_runtime_seconds")


def test_simulate_config_error(tmp_path, capsys):
    bad = tiny_config()
    bad["cells"][0]["n"] = "many"
    cfg = write_json(tmp_path / "c.json", bad)
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "ConfigError: cells[0].n" in capsys.readouterr().err


# rolling

def test_rolling_228_rows(tmp_path, returns_csv):
    prefix = tmp_path / "roll"
    assert main(["rolling", "--input", str(returns_csv), "--window", "48",
                 "--out-prefix", str(prefix)]) == 0
    doc = json.loads((tmp_path / "roll.json").read_text())
    assert len(doc["raw_estimates"]) == 181
    assert len((tmp_path / "roll.csv").read_text().splitlines()) == 229


def test_rolling_idempotent(tmp_path, returns_csv):
    runs = []
    for threads in ("1", "4"):
        prefix = tmp_path / f"roll{threads}"
        assert main(["rolling", "--input", str(returns_csv), "--window", "72", "--estimator", "sscm",
                     "--threads", threads, "--out-prefix", str(prefix)]) == 0
        runs.append(((tmp_path / f"roll{threads}.csv").read_bytes(),
                     (tmp_path / f"roll{threads}.json").read_bytes()))
    assert runs[0] == runs[1]


@pytest.mark.parametrize("window", ["47", "2"])
def test_rolling_bad_window(tmp_path, returns_csv, window):
    with pytest.raises(SystemExit) as info:
        main(["rolling", "--input", str(returns_csv), "--window", window, "--out-prefix", str(tmp_path / "r")])
    assert info.value.code == 2


def test_rolling_single_window(tmp_path):
    X = sample_elliptical_t(ModelSpec(p=4, d=1, nu=4.0, signal_vars=(5.0,)), 24, 1)
    inp = write_returns(tmp_path / "r.csv", X)
    assert main(["rolling", "--input", str(inp), "--window", "24", "--out-prefix", str(tmp_path / "o")]) == 0
    assert len(json.loads((tmp_path / "o.json").read_text())["raw_estimates"]) == 1


def test_rolling_window_longer_than_series(tmp_path, capsys):
    X = sample_elliptical_t(ModelSpec(p=4, d=1, nu=4.0, signal_vars=(5.0,)), 20, 1)
    inp = write_returns(tmp_path / "r.csv", X)
    assert main(["rolling", "--input", str(inp), "--window", "24", "--out-prefix", str(tmp_path / "o")]) == 1
    assert "exceeds" in capsys.readouterr().err


# bench

def test_bench_rows_per_cell_and_method(tmp_path):
    cfg = write_json(tmp_path / "c.json", tiny_config(
        replicates=2,
        cells=[{"p": 5, "d": 1, "n": 60, "signal_vars": [3]}, {"p": 6, "d": 2, "n": 70, "signal_vars": [3, 2]}],
    ))
    out = tmp_path / "b.csv"
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0].endswith("mean_runtime_seconds")
    assert len(rows) == 1 + 2 * 2


def test_bench_empty_methods(tmp_path):
    cfg = write_json(tmp_path / "c.json", tiny_config(methods=[]))
    out = tmp_path / "b.csv"
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1


def test_bench_table_shaped_config(tmp_path):
    methods = [{"estimator": e, "criterion": c}
               for e, c in [("cov", "sure1"), ("sscm", "sure1"), ("sscm", "sure2"), ("tyler", "sure2"),
                            ("hr", "sure2"), ("cov", "sure3"), ("sscm", "sure3"), ("tyler", "sure3"),
                            ("hr", "sure3")]]
    cells = [{"p": p, "d": 3, "n": n, "nu": 3, "signal_range": [1, 3]} for n in (200, 400) for p in (10, 20)]
    cfg = write_json(tmp_path / "c.json", {"seed": 1, "replicates": 10, "cells": cells, "methods": methods})
    out = tmp_path / "b.csv"
    start = time.perf_counter()
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
    assert time.perf_counter() - start < 600
    assert len(out.read_text().splitlines()) == 1 + 4 * 9
