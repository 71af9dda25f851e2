"""Data generation from the elliptical latent factor model and a seeded
scenario runner for comparing dimension estimators.

Random streams are Philox generators keyed by ``(seed, cell, replicate)``,
so every replicate is reproducible on its own and results do not depend on
the order (or the number of threads) in which replicates are executed.
"""

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import jsonschema
import numpy as np

from .estimators import EstimatorKind
from .exceptions import ConfigError, IoError, RobsureError
from .sure import CriterionKind, SelectionRule, estimate_dimension

logger = logging.getLogger(__name__)

__all__ = [
    "ModelSpec",
    "Cell",
    "Method",
    "ScenarioConfig",
    "CellMethodResult",
    "RunResult",
    "make_rng",
    "random_orthogonal",
    "sample_elliptical_t",
    "sample_gaussian_factor_model",
    "run_scenario",
    "time_methods",
    "load_config",
]


def make_rng(seed, *keys):
    """Philox generator for the substream ``(seed, *keys)``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def random_orthogonal(p, seed):
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with
    the signs of ``diag(R)`` folded into ``Q``."""
    rng = make_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of ``x = V D z`` with ``z`` multivariate t.

    ``D`` has ``sqrt(signal_vars)`` followed by ``p - d`` copies of
    ``sqrt(noise_var)`` on its diagonal. ``mixing`` is None for ``V = I``
    or an integer seed for a random orthogonal ``V``.
    """

    p: int
    d: int
    nu: float = math.inf
    noise_var: float = 0.5
    signal_vars: Tuple[float, ...] = ()
    mixing: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "signal_vars", tuple(float(v) for v in self.signal_vars))
        if self.p < 2:
            raise ValueError(f"p must be at least 2, got {self.p}")
        if not 0 <= self.d < self.p:
            raise ValueError(f"need 0 <= d < p, got d={self.d}, p={self.p}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        sv = np.asarray(self.signal_vars)
        if sv.shape[0] != self.d:
            raise ValueError(f"expected {self.d} signal variances, got {sv.shape[0]}")
        if np.any(np.diff(sv) > 0):
            raise ValueError("signal_vars must be sorted in descending order")
        if self.d and sv.min() <= self.noise_var:
            raise ValueError("every signal variance must exceed noise_var")

    @property
    def scales(self):
        return np.sqrt(np.r_[self.signal_vars, np.full(self.p - self.d, self.noise_var)])

    def mixing_matrix(self):
        if self.mixing is None:
            return np.eye(self.p)
        return random_orthogonal(self.p, self.mixing)


def sample_elliptical_t(spec, n, seed):
    """Draw `n` observations from the model in `spec`.

    ``x_i = V D z_i`` with ``z_i = g_i * sqrt(nu / c_i)``, ``g_i`` standard
    normal and ``c_i ~ chi^2_nu`` (a Gamma(nu/2, 2) draw); ``nu = inf``
    gives ``z_i = g_i``.

    Parameters
    ----------
    spec : ModelSpec
    n : int
    seed : int or numpy.random.Generator
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    rng = make_rng(seed)
    Z = rng.standard_normal((n, spec.p))
    if math.isfinite(spec.nu):
        chi2 = rng.gamma(spec.nu / 2.0, 2.0, size=n)
        Z *= np.sqrt(spec.nu / chi2)[:, None]
    return (Z * spec.scales) @ spec.mixing_matrix().T


def sample_gaussian_factor_model(spec, n, seed):
    """Gaussian model with additive noise, ``x_i = V_0 y_i + e_i``.

    ``y_i ~ N(0, diag(signal_vars - noise_var))`` and
    ``e_i ~ N(0, noise_var I)``, so ``cov(x) = V D^2 V'``.

    Returns
    -------
    X : ndarray of shape (n, p)
    signal : ndarray of shape (n, p)
        The noiseless part ``V_0 y_i`` of every observation.
    """
    rng = make_rng(seed)
    V0 = spec.mixing_matrix()[:, : spec.d]
    y = rng.standard_normal((n, spec.d)) * np.sqrt(np.asarray(spec.signal_vars) - spec.noise_var)
    noise = rng.standard_normal((n, spec.p)) * math.sqrt(spec.noise_var)
    signal = y @ V0.T
    return signal + noise, signal


@dataclass(frozen=True)
class Cell:
    """One grid point: model parameters and sample size.

    With ``signal_range=(lo, hi)`` the signal variances are redrawn from
    ``Unif(lo, hi)`` for every replicate; otherwise ``signal_vars`` is used.
    """

    p: int
    d: int
    n: int
    nu: float = math.inf
    noise_var: float = 0.5
    signal_vars: Tuple[float, ...] = ()
    signal_range: Optional[Tuple[float, float]] = None
    mixing: Optional[int] = None

    def model(self, rng=None):
        signal_vars = self.signal_vars
        if self.signal_range is not None:
            lo, hi = self.signal_range
            signal_vars = np.sort(rng.uniform(lo, hi, size=self.d))[::-1]
        return ModelSpec(
            p=self.p, d=self.d, nu=self.nu, noise_var=self.noise_var,
            signal_vars=tuple(signal_vars), mixing=self.mixing,
        )

    def to_dict(self):
        out = {"p": self.p, "d": self.d, "n": self.n, "nu": _num(self.nu), "noise_var": self.noise_var}
        if self.signal_range is not None:
            out["signal_range"] = list(self.signal_range)
        else:
            out["signal_vars"] = list(self.signal_vars)
        if self.mixing is not None:
            out["mixing"] = {"random": self.mixing}
        return out


@dataclass(frozen=True)
class Method:
    estimator: EstimatorKind
    criterion: CriterionKind
    rule: SelectionRule = SelectionRule.ARGMIN

    def __post_init__(self):
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        object.__setattr__(self, "criterion", CriterionKind(self.criterion))
        object.__setattr__(self, "rule", SelectionRule(self.rule))

    @property
    def label(self):
        suffix = " cp" if self.rule is SelectionRule.CHANGEPOINT else ""
        return f"{self.criterion.value.upper()}{suffix}({self.estimator.value})"

    def to_dict(self):
        return {"estimator": str(self.estimator), "criterion": str(self.criterion), "rule": str(self.rule)}


@dataclass(frozen=True)
class ScenarioConfig:
    cells: Tuple[Cell, ...]
    methods: Tuple[Method, ...]
    replicates: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.cells:
            raise ValueError("at least one cell is required")

    @classmethod
    def from_dict(cls, data):
        return _parse_config(data)

    def to_dict(self):
        return {
            "seed": self.seed,
            "replicates": self.replicates,
            "cells": [c.to_dict() for c in self.cells],
            "methods": [m.to_dict() for m in self.methods],
        }


@dataclass
class CellMethodResult:
    cell_index: int
    cell: Cell
    method: Method
    d_hats: List[Optional[int]] = field(default_factory=list)
    runtimes: List[float] = field(default_factory=list)
    failures: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def replicates(self):
        return len(self.d_hats)

    @property
    def proportion_correct(self):
        # failed replicates (None) count as wrong
        return sum(1 for d in self.d_hats if d == self.cell.d) / len(self.d_hats)

    @property
    def mean_runtime_seconds(self):
        return float(np.mean(self.runtimes)) if self.runtimes else 0.0


@dataclass
class RunResult:
    config: ScenarioConfig
    results: List[CellMethodResult]
    signal_vars: dict = field(default_factory=dict)

    def get(self, cell_index, method):
        for r in self.results:
            if r.cell_index == cell_index and r.method == method:
                return r
        raise KeyError((cell_index, method))

    def proportion(self, cell_index, method):
        return self.get(cell_index, method).proportion_correct

    CSV_FIELDS = ["cell", "p", "d", "n", "nu", "noise_var", "estimator", "criterion",
                  "rule", "replicates", "failures", "proportion_correct"]

    def to_csv(self, include_timing=True):
        fields = self.CSV_FIELDS + (["mean_runtime_seconds"] if include_timing else [])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        for r in self.results:
            c = r.cell
            row = [r.cell_index, c.p, c.d, c.n, _fmt(c.nu), _fmt(c.noise_var),
                   r.method.estimator.value, r.method.criterion.value, r.method.rule.value,
                   r.replicates, len(r.failures), f"{r.proportion_correct:.6f}"]
            if include_timing:
                row.append(f"{r.mean_runtime_seconds:.6f}")
            writer.writerow(row)
        return buf.getvalue()

    def to_dict(self, include_timing=True):
        out = {"config": self.config.to_dict(), "results": []}
        for r in self.results:
            item = {
                "cell": r.cell_index,
                "method": r.method.to_dict(),
                "label": r.method.label,
                "proportion_correct": r.proportion_correct,
                "d_hats": r.d_hats,
                "failures": [{"replicate": i, "reason": msg} for i, msg in r.failures],
            }
            if include_timing:
                item["mean_runtime_seconds"] = r.mean_runtime_seconds
                item["runtimes"] = r.runtimes
            out["results"].append(item)
        out["signal_vars"] = {str(k): v for k, v in sorted(self.signal_vars.items())}
        return out

    def to_json(self, include_timing=True):
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=False) + "\n"


def _fmt(x):
    x = float(x)
    if math.isinf(x):
        return "inf"
    return repr(x)


def _num(x):
    return "inf" if math.isinf(x) else x


def _run_replicate(config, cell_index, replicate):
    cell = config.cells[cell_index]
    rng = make_rng(config.seed, cell_index, replicate)
    spec = cell.model(rng)
    X = sample_elliptical_t(spec, cell.n, rng)
    out = []
    for method in config.methods:
        start = time.perf_counter()
        try:
            d_hat, _ = estimate_dimension(X, method.estimator, method.criterion, method.rule)
            reason = None
        except (RobsureError, np.linalg.LinAlgError) as exc:
            d_hat, reason = None, f"{type(exc).__name__}: {exc}"
            logger.warning("cell %d replicate %d %s failed: %s", cell_index, replicate, method.label, reason)
        out.append((d_hat, time.perf_counter() - start, reason))
    return list(spec.signal_vars), out


def run_scenario(config, threads=1):
    """Run every method on every replicate of every cell.

    All methods see the same sample within a replicate. Estimator failures
    are logged and recorded as incorrect estimates.

    Parameters
    ----------
    config : ScenarioConfig
    threads : int
        Worker threads; results are identical for any value.
    """
    tasks = [(ci, rep) for ci in range(len(config.cells)) for rep in range(config.replicates)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda t: _run_replicate(config, *t), tasks))
    else:
        outputs = [_run_replicate(config, *t) for t in tasks]
    by_key = dict(zip(tasks, outputs))
    results = []
    signal_vars = {}
    for ci, cell in enumerate(config.cells):
        signal_vars[ci] = [by_key[(ci, rep)][0] for rep in range(config.replicates)]
        for mi, method in enumerate(config.methods):
            r = CellMethodResult(cell_index=ci, cell=cell, method=method)
            for rep in range(config.replicates):
                d_hat, elapsed, reason = by_key[(ci, rep)][1][mi]
                r.d_hats.append(d_hat)
                r.runtimes.append(elapsed)
                if reason is not None:
                    r.failures.append((rep, reason))
            results.append(r)
    return RunResult(config=config, results=results, signal_vars=signal_vars)


def time_methods(config):
    """Serial run of `config` for timing; data generation is not timed."""
    return run_scenario(config, threads=1)


# JSON configuration

_CELL_SCHEMA = {
    "type": "object",
    "required": ["p", "d", "n"],
    "additionalProperties": False,
    "properties": {
        "p": {"type": "integer", "minimum": 2},
        "d": {"type": "integer", "minimum": 0},
        "n": {"type": "integer", "minimum": 2},
        "nu": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"enum": ["inf", "Infinity"]}]},
        "noise_var": {"type": "number", "exclusiveMinimum": 0},
        "signal_vars": {"type": "array", "items": {"type": "number"}},
        "signal_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "mixing": {
            "oneOf": [
                {"enum": ["identity"]},
                {"type": "object", "required": ["random"], "additionalProperties": False,
                 "properties": {"random": {"type": "integer", "minimum": 0}}},
            ]
        },
    },
}

_METHOD_SCHEMA = {
    "type": "object",
    "required": ["estimator", "criterion"],
    "additionalProperties": False,
    "properties": {
        "estimator": {"enum": [k.value for k in EstimatorKind]},
        "criterion": {"enum": [k.value for k in CriterionKind]},
        "rule": {"enum": ["argmin", "cp", "changepoint"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["seed", "replicates", "cells", "methods"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "replicates": {"type": "integer", "minimum": 1},
        "cells": {"type": "array", "minItems": 1, "items": _CELL_SCHEMA},
        "methods": {"type": "array", "items": _METHOD_SCHEMA},
    },
}


def _path(parts):
    out = ""
    for part in parts:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _parse_config(data):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{_path(err.absolute_path)}: {err.message}")
    cells = []
    for i, c in enumerate(data["cells"]):
        where = f"cells[{i}]"
        nu = c.get("nu", "inf")
        nu = math.inf if isinstance(nu, str) else float(nu)
        if c["d"] >= c["p"]:
            raise ConfigError(f"{where}.d: must be smaller than p")
        has_vars, has_range = "signal_vars" in c, "signal_range" in c
        if has_vars and has_range:
            raise ConfigError(f"{where}: give either signal_vars or signal_range, not both")
        if c["d"] > 0 and not (has_vars or has_range):
            raise ConfigError(f"{where}: signal_vars or signal_range is required when d > 0")
        noise_var = float(c.get("noise_var", 0.5))
        signal_range = None
        if has_range:
            lo, hi = c["signal_range"]
            if not noise_var < lo <= hi:
                raise ConfigError(f"{where}.signal_range: need noise_var < lo <= hi")
            signal_range = (float(lo), float(hi))
        mixing = c.get("mixing", "identity")
        mixing = None if mixing == "identity" else int(mixing["random"])
        cell = Cell(
            p=c["p"], d=c["d"], n=c["n"], nu=nu, noise_var=noise_var,
            signal_vars=tuple(sorted(c.get("signal_vars", []), reverse=True)),
            signal_range=signal_range, mixing=mixing,
        )
        if not has_range:
            try:
                cell.model()
            except ValueError as exc:
                raise ConfigError(f"{where}.signal_vars: {exc}") from None
        cells.append(cell)
    methods = [Method(m["estimator"], m["criterion"], m.get("rule", "argmin")) for m in data["methods"]]
    return ScenarioConfig(cells=cells, methods=methods, replicates=data["replicates"], seed=data["seed"])


def load_config(path):
    """Read and validate a scenario configuration from a JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return _parse_config(data)
