"""Rolling-window dimension estimation for multivariate return series.

A window of even length ``l`` slides over the ``T`` dates; each of the
``T - l + 1`` windows gets its own dimension estimate. Per-date values are
then weighted averages over all windows covering the date, with weight 1
for the two middle positions of a window, decreasing linearly to ``2/l`` at
both ends.
"""

import csv
import datetime
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .estimators import EstimatorKind, FixedPointConfig
from .exceptions import (
    IoError,
    LengthMismatch,
    MissingValue,
    NonMonotoneDates,
    ParseError,
    RobsureError,
)
from .sure import CriterionKind, SelectionRule, estimate_dimension

logger = logging.getLogger(__name__)

__all__ = [
    "ReturnSeries",
    "WindowConfig",
    "SmoothedCurve",
    "load_returns_csv",
    "window_weights",
    "rolling_dimensions",
    "smooth_backtransform",
    "rolling_report",
]


def _date_key(dates):
    try:
        return [datetime.date.fromisoformat(d) for d in dates]
    except ValueError:
        return list(dates)


@dataclass(frozen=True)
class ReturnSeries:
    labels: Tuple[str, ...]
    dates: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dates", tuple(self.dates))
        if values.ndim != 2:
            raise ValueError("values must be a (T, p) matrix")
        T, p = values.shape
        if T < 2 or p < 2:
            raise ValueError(f"need T >= 2 and p >= 2, got T={T}, p={p}")
        if len(self.labels) != p or len(self.dates) != T:
            raise LengthMismatch("labels/dates do not match the value matrix")
        if not np.all(np.isfinite(values)):
            raise MissingValue("series contains missing or non-finite values")
        keys = _date_key(self.dates)
        for i in range(1, T):
            if not keys[i] > keys[i - 1]:
                raise NonMonotoneDates(
                    f"dates must be strictly increasing: {self.dates[i - 1]!r} then {self.dates[i]!r}"
                )

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]


def load_returns_csv(path):
    """Read a series from a CSV with header ``date,<label_1>,...,<label_p>``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0].lower() != "date":
        raise ParseError(f"{path}, line 1: header must be 'date' followed by at least two labels")
    labels = header[1:]
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}")
        date = row[0].strip()
        if not date:
            raise MissingValue(f"{path}, line {lineno}: missing date")
        parsed = []
        for label, cell in zip(labels, row[1:]):
            cell = cell.strip()
            if not cell:
                raise MissingValue(f"{path}, line {lineno}, column {label!r}: missing value")
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"{path}, line {lineno}, column {label!r}: not a number: {cell!r}") from None
            if not np.isfinite(x):
                raise MissingValue(f"{path}, line {lineno}, column {label!r}: non-finite value {cell!r}")
            parsed.append(x)
        dates.append(date)
        values.append(parsed)
    if len(values) < 2:
        raise ParseError(f"{path}: need at least two data rows")
    return ReturnSeries(labels=labels, dates=dates, values=np.array(values))


@dataclass(frozen=True)
class WindowConfig:
    length: int
    estimator: EstimatorKind = EstimatorKind.TYLER
    criterion: CriterionKind = CriterionKind.SURE2
    rule: SelectionRule = SelectionRule.ARGMIN

    def __post_init__(self):
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        object.__setattr__(self, "criterion", CriterionKind(self.criterion))
        object.__setattr__(self, "rule", SelectionRule(self.rule))
        if int(self.length) != self.length or self.length < 4 or self.length % 2:
            raise ValueError(f"window length must be an even integer >= 4, got {self.length}")

    def to_dict(self):
        return {"length": self.length, "estimator": str(self.estimator),
                "criterion": str(self.criterion), "rule": str(self.rule)}


def window_weights(length):
    """Weights ``min(pos, l + 1 - pos) / (l / 2)`` for positions ``1..l``."""
    if length < 2 or length % 2:
        raise ValueError(f"window length must be even, got {length}")
    pos = np.arange(1, length + 1)
    return np.minimum(pos, length + 1 - pos) / (length / 2)


def _window_estimates(series, cfg, fp=None, threads=1):
    if cfg.length > series.T:
        raise ValueError(f"window length {cfg.length} exceeds series length {series.T}")
    starts = range(series.T - cfg.length + 1)

    def one(s):
        X = series.values[s: s + cfg.length]
        try:
            d_hat, _ = estimate_dimension(X, cfg.estimator, cfg.criterion, cfg.rule, fp)
            return d_hat, None
        except (RobsureError, np.linalg.LinAlgError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            logger.warning("window starting %s failed: %s", series.dates[s], reason)
            return None, reason

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, starts))
    else:
        out = [one(s) for s in starts]
    return [d for d, _ in out], [r for _, r in out]


def rolling_dimensions(series, cfg, fp: Optional[FixedPointConfig] = None, threads=1):
    """Dimension estimate for each of the ``T - l + 1`` windows.

    Windows whose estimation fails are returned as None (and logged);
    :func:`smooth_backtransform` fills them from the nearest successful
    window.
    """
    return _window_estimates(series, cfg, fp, threads)[0]


@dataclass(frozen=True)
class SmoothedCurve:
    smoothed: np.ndarray
    raw: Tuple[int, ...]
    failed: Tuple[bool, ...]
    n_covering: np.ndarray
    window_length: int

    def to_dict(self):
        return {
            "window_length": self.window_length,
            "raw_estimates": list(self.raw),
            "failed_windows": [i for i, f in enumerate(self.failed) if f],
            "smoothed": [float(v) for v in self.smoothed],
            "n_covering_windows": [int(c) for c in self.n_covering],
        }

    @classmethod
    def from_dict(cls, data):
        failed = set(data["failed_windows"])
        raw = tuple(int(d) for d in data["raw_estimates"])
        return cls(
            smoothed=np.asarray(data["smoothed"], dtype=float),
            raw=raw,
            failed=tuple(i in failed for i in range(len(raw))),
            n_covering=np.asarray(data["n_covering_windows"], dtype=int),
            window_length=int(data["window_length"]),
        )

    def __eq__(self, other):
        if not isinstance(other, SmoothedCurve):
            return NotImplemented
        return (
            self.raw == other.raw and self.failed == other.failed
            and self.window_length == other.window_length
            and np.array_equal(self.smoothed, other.smoothed)
            and np.array_equal(self.n_covering, other.n_covering)
        )


def _fill_failures(raw):
    ok = [i for i, d in enumerate(raw) if d is not None]
    if not ok:
        raise RobsureError("every window failed; nothing to smooth")
    ok_arr = np.array(ok)
    filled = []
    for i, d in enumerate(raw):
        if d is None:
            # nearest successful window, earlier one on ties
            d = raw[ok_arr[np.argmin(np.abs(ok_arr - i))]]
        filled.append(int(d))
    return filled


def smooth_backtransform(raw, length, T):
    """Per-date weighted average of the window estimates covering each date.

    Parameters
    ----------
    raw : sequence of int or None
        Window estimates, ``T - length + 1`` of them; None marks a failed
        window.
    length : int
        Even window length.
    T : int
        Number of dates.
    """
    raw = list(raw)
    if len(raw) != T - length + 1:
        raise LengthMismatch(f"expected {T - length + 1} window estimates, got {len(raw)}")
    w = window_weights(length)
    filled = _fill_failures(raw)
    num = np.convolve(np.asarray(filled, dtype=float), w)
    den = np.convolve(np.ones(len(filled)), w)
    covering = np.convolve(np.ones(len(filled), dtype=int), np.ones(length, dtype=int))
    return SmoothedCurve(
        smoothed=num / den,
        raw=tuple(filled),
        failed=tuple(d is None for d in raw),
        n_covering=covering,
        window_length=length,
    )


def rolling_report(series, cfg, fp=None, out_prefix="rolling", threads=1):
    """Run the rolling analysis and write ``<prefix>.csv`` and ``<prefix>.json``.

    The CSV has one row per date with columns ``date``,
    ``smoothed_dimension`` (six decimals) and ``n_covering_windows``.
    """
    raw, reasons = _window_estimates(series, cfg, fp, threads)
    curve = smooth_backtransform(raw, cfg.length, series.T)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["date", "smoothed_dimension", "n_covering_windows"])
    for date, v, c in zip(series.dates, curve.smoothed, curve.n_covering):
        writer.writerow([date, f"{v:.6f}", int(c)])

    doc = {
        "config": cfg.to_dict(),
        "fixed_point": None if fp is None else {"tol": fp.tol, "max_iter": fp.max_iter},
        "labels": list(series.labels),
        "dates": list(series.dates),
        "window_start_dates": list(series.dates[: len(raw)]),
        **curve.to_dict(),
        "diagnostics": [
            {"window": i, "start_date": series.dates[i], "reason": r}
            for i, r in enumerate(reasons) if r is not None
        ],
    }
    csv_path, json_path = f"{out_prefix}.csv", f"{out_prefix}.json"
    try:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write rolling outputs: {exc.strerror}") from None
    return curve
