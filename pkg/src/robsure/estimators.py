"""Location-scatter pairs: mean/covariance, spatial median with SSCM or
Tyler's shape matrix, and the Hettmansperger-Randles pair.

All estimators work on an ``(n, p)`` array with observations in rows. The
shape estimators (Tyler, H-R) are returned with unit determinant.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_location, check_sample, is_collinear
from .exceptions import (
    DegenerateSample,
    InvalidSample,
    LocationOnDatum,
    NonConvergence,
)
from .numerics import as_symmetric, sqrt_and_inv_sqrt

__all__ = [
    "EstimatorKind",
    "FixedPointConfig",
    "LocationScatterPair",
    "SPATIAL_MEDIAN_DEFAULTS",
    "SHAPE_DEFAULTS",
    "mean_cov",
    "spatial_median",
    "sscm",
    "tyler_shape",
    "hr_pair",
    "estimate_pair",
]

# Euclidean distance below which a location counts as sitting on a datum
ON_DATUM_TOL = 1e-12


class _ParseableEnum(str, enum.Enum):
    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            key = value.strip().lower()
            for member in cls:
                if member.value == key or member.name.lower() == key:
                    return member
        return None

    def __str__(self):
        return self.value


class EstimatorKind(_ParseableEnum):
    COV = "cov"
    SSCM = "sscm"
    TYLER = "tyler"
    HR = "hr"


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration control for the fixed-point solvers.

    Parameters
    ----------
    tol : float
        Convergence tolerance. For the spatial median the gradient norm
        must fall below ``tol * n``; for Tyler and H-R the fixed-point
        residuals must fall below ``tol``.
    max_iter : int
        Iteration budget.
    """

    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")


SPATIAL_MEDIAN_DEFAULTS = FixedPointConfig(tol=1e-9, max_iter=500)
SHAPE_DEFAULTS = FixedPointConfig(tol=1e-8, max_iter=200)


@dataclass(frozen=True)
class LocationScatterPair:
    location: np.ndarray
    scatter: np.ndarray
    kind: EstimatorKind
    iterations: int = 0
    converged: bool = True
    residuals: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.location.shape[0]


def _distances(Y, what="location"):
    r = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    hit = np.flatnonzero(r <= ON_DATUM_TOL)
    if hit.size:
        raise LocationOnDatum(f"{what} coincides with observation {int(hit[0])}")
    return r


def _normalize_det(S):
    sign, logdet = np.linalg.slogdet(S)
    S = S / np.exp(logdet / S.shape[0])
    return (S + S.T) / 2.0


def mean_cov(X):
    """Mean vector and covariance matrix with divisor ``n``."""
    X = check_sample(X)
    t = X.mean(axis=0)
    Y = X - t
    S = as_symmetric(Y.T @ Y / X.shape[0])
    return LocationScatterPair(location=t, scatter=S, kind=EstimatorKind.COV)


def _weiszfeld(X, cfg):
    n = X.shape[0]
    t = np.median(X, axis=0)
    for it in range(1, cfg.max_iter + 1):
        D = X - t
        r = np.sqrt(np.einsum("ij,ij->i", D, D))
        on = r <= ON_DATUM_TOL
        off = ~on
        grad = (D[off] / r[off, None]).sum(axis=0)
        gnorm = np.linalg.norm(grad)
        eta = int(on.sum())
        if eta == 0 and gnorm <= cfg.tol * n:
            return t, it - 1, gnorm
        if eta > 0 and gnorm <= eta:
            # subgradient condition: the datum itself is the minimizer
            return t, it - 1, 0.0
        w = 1.0 / r[off]
        T = (w[:, None] * X[off]).sum(axis=0) / w.sum()
        if eta == 0:
            t = T
        else:
            # Vardi-Zhang step away from a datum
            beta = min(1.0, eta / gnorm)
            t = (1.0 - beta) * T + beta * t
    D = X - t
    r = np.sqrt(np.einsum("ij,ij->i", D, D))
    off = r > ON_DATUM_TOL
    gnorm = np.linalg.norm((D[off] / r[off, None]).sum(axis=0))
    if gnorm <= cfg.tol * n:
        return t, cfg.max_iter, gnorm
    raise NonConvergence(
        f"spatial median did not converge in {cfg.max_iter} iterations "
        f"(gradient norm {gnorm:.3e})",
        iterations=cfg.max_iter,
        residual=gnorm,
    )


def spatial_median(X, cfg: Optional[FixedPointConfig] = None):
    """Minimizer of the sum of Euclidean distances to the observations.

    Weiszfeld iteration started at the coordinatewise median, with the
    Vardi-Zhang modification when an iterate lands on an observation.

    Raises
    ------
    DegenerateSample
        If the observations lie on a line (the minimizer is then not
        unique in general).
    NonConvergence
        If the gradient norm is still above ``cfg.tol * n`` after
        ``cfg.max_iter`` iterations.
    """
    X = check_sample(X)
    if is_collinear(X):
        raise DegenerateSample("observations are concentrated on a line")
    cfg = cfg or SPATIAL_MEDIAN_DEFAULTS
    return _weiszfeld(X, cfg)[0]


def sscm(X, location):
    """Spatial sign covariance matrix around `location` (trace one)."""
    X = check_sample(X)
    location = check_location(location, X.shape[1])
    Y = X - location
    r = _distances(Y)
    U = Y / r[:, None]
    return as_symmetric(U.T @ U / X.shape[0])


def _tyler_iterate(Y, S, cfg):
    n, p = Y.shape
    eye = np.eye(p) / p
    for it in range(cfg.max_iter + 1):
        S_half, S_inv_half = sqrt_and_inv_sqrt(S)
        Z = Y @ S_inv_half
        q = _distances(Z)
        U = Z / q[:, None]
        M = U.T @ U / n
        resid = np.linalg.norm(M - eye)
        if resid <= cfg.tol:
            return S, it, resid
        if it == cfg.max_iter:
            break
        S = _normalize_det(p * S_half @ M @ S_half)
    raise NonConvergence(
        f"Tyler iteration did not converge in {cfg.max_iter} iterations "
        f"(residual {resid:.3e})",
        iterations=cfg.max_iter,
        residual=resid,
    )


def tyler_shape(X, location, cfg: Optional[FixedPointConfig] = None):
    """Tyler's shape matrix around a fixed location, normalized to det 1.

    Iterates ``S <- (p/n) sum y y' / (y' S^{-1} y)`` with determinant
    renormalization until ``||(1/n) sum u u' - I/p||_F <= cfg.tol``, where
    ``u`` are the signs of the whitened centered observations.
    """
    X = check_sample(X)
    n, p = X.shape
    if n <= p:
        raise InvalidSample(f"Tyler's shape matrix needs n > p, got n={n}, p={p}")
    location = check_location(location, p)
    cfg = cfg or SHAPE_DEFAULTS
    Y = X - location
    _distances(Y)
    S, _, _ = _tyler_iterate(Y, np.eye(p), cfg)
    return S


def _tyler_pair(X, cfg, sm_cfg):
    n, p = X.shape
    if n <= p:
        raise InvalidSample(f"Tyler's shape matrix needs n > p, got n={n}, p={p}")
    t = spatial_median(X, sm_cfg)
    Y = X - t
    _distances(Y, "spatial median")
    S, it, resid = _tyler_iterate(Y, np.eye(p), cfg)
    return LocationScatterPair(
        location=t, scatter=S, kind=EstimatorKind.TYLER,
        iterations=it, residuals={"shape": resid},
    )


def hr_pair(X, cfg: Optional[FixedPointConfig] = None, sm_cfg=None):
    """Hettmansperger-Randles location and shape (det 1).

    Alternates a Weiszfeld-type location step in whitened coordinates with
    a Tyler shape step, starting from the spatial median and the SSCM. The
    two defining equations are

        mean(u_i) = 0,   mean(u_i u_i') = I / p,

    with ``u_i`` the signs of ``S^{-1/2}(x_i - t)``. Uniqueness of the
    solution is not known in general; the result is the stationary point
    reached from this initialization.
    """
    X = check_sample(X)
    n, p = X.shape
    if n <= p:
        raise InvalidSample(f"H-R estimator needs n > p, got n={n}, p={p}")
    cfg = cfg or SHAPE_DEFAULTS
    t = spatial_median(X, sm_cfg or SPATIAL_MEDIAN_DEFAULTS)
    S = _normalize_det(sscm(X, t))
    eye = np.eye(p) / p
    for it in range(cfg.max_iter + 1):
        S_half, S_inv_half = sqrt_and_inv_sqrt(S)
        Z = (X - t) @ S_inv_half
        q = _distances(Z)
        U = Z / q[:, None]
        loc_res = np.linalg.norm(U.mean(axis=0))
        M = U.T @ U / n
        shape_res = np.linalg.norm(M - eye)
        if loc_res <= cfg.tol and shape_res <= cfg.tol:
            return LocationScatterPair(
                location=t, scatter=S, kind=EstimatorKind.HR, iterations=it,
                residuals={"location": loc_res, "shape": shape_res},
            )
        if it == cfg.max_iter:
            break
        t = t + S_half @ U.sum(axis=0) / (1.0 / q).sum()
        Z = (X - t) @ S_inv_half
        q = _distances(Z)
        U = Z / q[:, None]
        S = _normalize_det(p * S_half @ (U.T @ U / n) @ S_half)
    raise NonConvergence(
        f"H-R iteration did not converge in {cfg.max_iter} iterations "
        f"(residuals {loc_res:.3e}, {shape_res:.3e})",
        iterations=cfg.max_iter,
        residual=max(loc_res, shape_res),
    )


def estimate_pair(X, kind, cfg: Optional[FixedPointConfig] = None):
    """Dispatch to the location-scatter pair named by `kind`.

    When `cfg` is None each stage uses its own defaults (spatial median:
    ``tol=1e-9, max_iter=500``; Tyler and H-R: ``tol=1e-8, max_iter=200``).
    A given `cfg` is applied to every stage.
    """
    kind = EstimatorKind(kind)
    X = check_sample(X)
    sm_cfg = cfg or SPATIAL_MEDIAN_DEFAULTS
    if kind is EstimatorKind.COV:
        return mean_cov(X)
    if kind is EstimatorKind.SSCM:
        if is_collinear(X):
            raise DegenerateSample("observations are concentrated on a line")
        t, it, gnorm = _weiszfeld(X, sm_cfg)
        return LocationScatterPair(
            location=t, scatter=sscm(X, t), kind=kind,
            iterations=it, residuals={"gradient": gnorm},
        )
    if kind is EstimatorKind.TYLER:
        return _tyler_pair(X, cfg or SHAPE_DEFAULTS, sm_cfg)
    return hr_pair(X, cfg, sm_cfg)
