import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robsure.exceptions import (
    IoError,
    LengthMismatch,
    MissingValue,
    NonMonotoneDates,
    ParseError,
    RobsureError,
)
from robsure.rolling import (
    ReturnSeries,
    SmoothedCurve,
    WindowConfig,
    load_returns_csv,
    rolling_dimensions,
    rolling_report,
    smooth_backtransform,
    window_weights,
)
from robsure.simulate import ModelSpec, make_rng, sample_elliptical_t


def monthly_dates(T, start=(2000, 1)):
    y, m = start
    out = []
    for _ in range(T):
        out.append(f"{y:04d}-{m:02d}-01")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def make_series(values, start=(2000, 1)):
    values = np.asarray(values)
    return ReturnSeries(
        labels=[f"a{j}" for j in range(values.shape[1])],
        dates=monthly_dates(values.shape[0], start),
        values=values,
    )


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# loading

def test_load_happy_path(tmp_path):
    path = write_csv(tmp_path / "r.csv", "date,IBM,KO\n2000-01-01,0.1,-0.2\n2000-02-01,0.0,0.3\n2000-03-01,1e-2,5\n")
    series = load_returns_csv(path)
    assert (series.T, series.p) == (3, 2)
    assert series.labels == ("IBM", "KO")
    np.testing.assert_array_equal(series.values[2], [0.01, 5.0])


def test_load_blank_cell(tmp_path):
    path = write_csv(tmp_path / "r.csv", "date,IBM,KO\n2000-01-01,0.1,-0.2\n2000-02-01,,0.3\n")
    with pytest.raises(MissingValue, match=r"line 3.*'IBM'"):
        load_returns_csv(path)


def test_load_duplicate_date(tmp_path):
    path = write_csv(tmp_path / "r.csv", "date,a,b\n2000-01-01,1,2\n2000-01-01,3,4\n")
    with pytest.raises(NonMonotoneDates):
        load_returns_csv(path)


def test_load_decreasing_date(tmp_path):
    path = write_csv(tmp_path / "r.csv", "date,a,b\n2000-02-01,1,2\n2000-01-01,3,4\n")
    with pytest.raises(NonMonotoneDates):
        load_returns_csv(path)


@pytest.mark.parametrize("text, match", [
    ("date,a,b\n2000-01-01,1\n2000-02-01,1,2\n", "line 2"),
    ("date,a,b\n2000-01-01,1,x\n2000-02-01,1,2\n", "line 2"),
    ("when,a,b\n2000-01-01,1,2\n2000-02-01,1,2\n", "line 1"),
    ("", "empty"),
])
def test_load_parse_errors(tmp_path, text, match):
    with pytest.raises(ParseError, match=match):
        load_returns_csv(write_csv(tmp_path / "r.csv", text))


def test_load_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_returns_csv(tmp_path / "absent.csv")


# weights and smoothing

def test_window_config_validation():
    for bad in (2, 3, 47):
        with pytest.raises(ValueError):
            WindowConfig(bad)
    assert WindowConfig(48, "hr", "sure3", "cp").to_dict() == {
        "length": 48, "estimator": "hr", "criterion": "sure3", "rule": "cp"}


def test_weights_48():
    w = window_weights(48)
    assert w[23] == w[24] == 1.0
    assert w[0] == w[-1] == pytest.approx(1 / 24)
    np.testing.assert_allclose(np.diff(w[:24]), 1 / 24)
    np.testing.assert_array_equal(w, w[::-1])


def test_smooth_hand_example():
    curve = smooth_backtransform([0, 4], 4, 5)
    assert curve.smoothed[2] == pytest.approx(2.0)
    assert curve.smoothed[0] == 0.0 and curve.smoothed[4] == 4.0
    np.testing.assert_array_equal(curve.n_covering, [1, 2, 2, 2, 1])


def test_smooth_constant():
    curve = smooth_backtransform([3] * 20, 8, 27)
    np.testing.assert_array_equal(curve.smoothed, 3.0)


def test_smooth_length_mismatch():
    with pytest.raises(LengthMismatch):
        smooth_backtransform([1, 2, 3], 4, 5)


def test_smooth_fills_failures():
    curve = smooth_backtransform([None, 1, None, None, 3, None], 4, 9)
    assert curve.raw == (1, 1, 1, 3, 3, 3)
    assert curve.failed == (True, False, True, True, False, True)
    with pytest.raises(RobsureError):
        smooth_backtransform([None, None], 4, 5)


def covering_mass(length, T):
    w = window_weights(length)
    mass = np.zeros(T)
    for s in range(T - length + 1):
        mass[s: s + length] += w
    return mass


@settings(max_examples=60, deadline=None)
@given(
    half=st.integers(2, 12),
    extra=st.integers(0, 30),
    data=st.data(),
)
def test_smoothing_properties(half, extra, data):
    length = 2 * half
    T = length + extra
    raw = data.draw(st.lists(st.integers(0, 9), min_size=T - length + 1, max_size=T - length + 1))
    curve = smooth_backtransform(raw, length, T)
    assert len(curve.smoothed) == T
    assert np.all(curve.smoothed >= min(raw) - 1e-12)
    assert np.all(curve.smoothed <= max(raw) + 1e-12)
    # reference: explicit per-date weighted average
    w = window_weights(length)
    for t in range(T):
        num = sum(w[t - s] * raw[s] for s in range(len(raw)) if 0 <= t - s < length)
        den = sum(w[t - s] for s in range(len(raw)) if 0 <= t - s < length)
        assert curve.smoothed[t] == pytest.approx(num / den, rel=1e-12)
    mass = covering_mass(length, T)
    interior = [t for t in range(T) if length - 1 <= t <= T - length]
    if interior:
        assert np.ptp(mass[interior]) < 1e-12
        outside = [t for t in range(T) if t not in interior]
        assert np.all(mass[outside] < mass[interior[0]])


def test_curve_json_round_trip():
    curve = smooth_backtransform([1, None, 2, 2, 3], 4, 8)
    back = SmoothedCurve.from_dict(json.loads(json.dumps(curve.to_dict())))
    assert back == curve


# window estimation

def test_single_window():
    X = sample_elliptical_t(ModelSpec(p=4, d=1, nu=3.0, signal_vars=(5.0,)), 48, 0)
    assert len(rolling_dimensions(make_series(X), WindowConfig(48))) == 1


def test_tiled_series_constant_estimates():
    block = sample_elliptical_t(ModelSpec(p=4, d=1, nu=3.0, signal_vars=(5.0,)), 12, 1)
    X = np.tile(block, (5, 1))
    # every window of length 12 is a cyclic shift of the block, i.e. the same rows
    raw = rolling_dimensions(make_series(X), WindowConfig(12, "cov", "sure2"))
    assert len(set(raw)) == 1


def test_regime_shift():
    length, half = 48, 96
    lower = 0
    for seed in range(20):
        a = sample_elliptical_t(ModelSpec(p=5, d=1, nu=3.0, signal_vars=(6.0,)), half, make_rng(seed, 0))
        b = sample_elliptical_t(ModelSpec(p=5, d=3, nu=3.0, signal_vars=(8.0, 6.0, 4.0)), half, make_rng(seed, 1))
        raw = rolling_dimensions(make_series(np.vstack([a, b])), WindowConfig(length))
        early = np.mean(raw[: half - length + 1])
        late = np.mean(raw[half:])
        lower += early < late
    assert lower >= 16


def test_date_relabel_does_not_change_numbers(tmp_path):
    X = sample_elliptical_t(ModelSpec(p=4, d=1, nu=3.0, signal_vars=(5.0,)), 40, 2)
    cfg = WindowConfig(16, "sscm", "sure2")
    a = rolling_report(make_series(X), cfg, out_prefix=str(tmp_path / "a"))
    b = rolling_report(make_series(X, start=(1990, 6)), cfg, out_prefix=str(tmp_path / "b"))
    assert a == b


# report

def test_report_outputs(tmp_path):
    X = sample_elliptical_t(ModelSpec(p=4, d=1, nu=3.0, signal_vars=(5.0,)), 40, 3)
    series = make_series(X)
    cfg = WindowConfig(16)
    prefix = str(tmp_path / "out")
    curve = rolling_report(series, cfg, out_prefix=prefix)
    rows = (tmp_path / "out.csv").read_text().splitlines()
    assert rows[0] == "date,smoothed_dimension,n_covering_windows"
    assert len(rows) - 1 == series.T
    assert rows[1].split(",")[1] == f"{curve.smoothed[0]:.6f}"
    doc = json.loads((tmp_path / "out.json").read_text())
    assert len(doc["raw_estimates"]) == 40 - 16 + 1
    assert SmoothedCurve.from_dict(doc) == curve
    assert doc["config"] == cfg.to_dict() and doc["labels"] == list(series.labels)

    first = {p: (tmp_path / f"out.{p}").read_bytes() for p in ("csv", "json")}
    rolling_report(series, cfg, out_prefix=prefix, threads=3)
    assert first == {p: (tmp_path / f"out.{p}").read_bytes() for p in ("csv", "json")}
