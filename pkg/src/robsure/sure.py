"""SURE criteria for the number of retained principal components.

Three sample criteria are available, evaluated for ``k = 0, ..., p - 1``
from the eigenvalues ``s_1 > ... > s_p`` of a scatter estimate, with the
smallest eigenvalue ``s_p`` standing in for the noise variance:

* ``sure1``: residual variance plus a generalized-degrees-of-freedom term
  built from the derivatives of the location-scatter pair (mean/covariance
  or spatial median/SSCM only).
* ``sure2``: the closed form of ``sure1`` for the covariance matrix, with
  the eigenvalues of any scatter plugged in.
* ``sure3``: ``sure2`` with the terms vanishing as ``n -> inf`` dropped.

The dimension estimate is the minimizing ``k`` or, alternatively, the change
point in the successive differences of the curve.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import check_sample, is_collinear
from .estimators import (
    ON_DATUM_TOL,
    EstimatorKind,
    FixedPointConfig,
    LocationScatterPair,
    _ParseableEnum,
    estimate_pair,
)
from .exceptions import (
    CurveTooShort,
    DegenerateSample,
    EigenvalueCollision,
    IndexOutOfRange,
    KindMismatch,
    LocationOnDatum,
    NoisePositivity,
    SingularScatter,
)
from .numerics import sym_eigen

__all__ = [
    "CriterionKind",
    "SelectionRule",
    "SureCurve",
    "DerivativeBundle",
    "sure1_curve",
    "sure2_curve",
    "sure3_curve",
    "derivative_bundle_cov",
    "derivative_bundle_sscm",
    "derivative_sum",
    "select_dimension",
    "changepoint_select",
    "estimate_dimension",
]

GAP_RTOL = 1e-10
CP_MIN_SEGMENT = 2
CP_VARIANCE_FLOOR = 1e-12
CP_MIN_GAIN = 1e-9


class CriterionKind(_ParseableEnum):
    SURE1 = "sure1"
    SURE2 = "sure2"
    SURE3 = "sure3"


class SelectionRule(_ParseableEnum):
    ARGMIN = "argmin"
    CHANGEPOINT = "cp"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("changepoint", "change_point"):
            return cls.CHANGEPOINT
        return super()._missing_(value)


@dataclass(frozen=True)
class SureCurve:
    """Criterion values for ``k = 0, ..., p - 1``.

    ``eigenvalues`` are the scatter eigenvalues the curve was computed
    from; the last one is the noise-variance plug-in.
    """

    values: np.ndarray
    criterion: CriterionKind
    estimator: Optional[EstimatorKind]
    n: int
    eigenvalues: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != np.asarray(self.eigenvalues).shape[0]:
            raise ValueError("curve length must equal the number of eigenvalues")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve contains non-finite values")

    @property
    def p(self):
        return len(self.values)

    def to_dict(self):
        try:
            d_cp = changepoint_select(self)
        except CurveTooShort:
            d_cp = None
        return {
            "criterion": str(self.criterion),
            "estimator": None if self.estimator is None else str(self.estimator),
            "n": int(self.n),
            "p": int(self.p),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "values": [float(v) for v in self.values],
            "d_hat_argmin": select_dimension(self, SelectionRule.ARGMIN),
            "d_hat_changepoint": d_cp,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data):
        est = data.get("estimator")
        return cls(
            values=np.asarray(data["values"], dtype=float),
            criterion=CriterionKind(data["criterion"]),
            estimator=None if est is None else EstimatorKind(est),
            n=int(data["n"]),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
        )


@dataclass(frozen=True)
class DerivativeBundle:
    """Derivatives of a location-scatter pair with respect to each datum.

    Attributes
    ----------
    h : ndarray of shape (n, p, p)
        ``h[i, j]`` is the derivative of the location when coordinate ``j``
        of observation ``i`` is perturbed.
    H : ndarray of shape (n, p, p, p)
        ``H[i, j]`` is the (symmetric) derivative of the scatter matrix.
    """

    h: np.ndarray
    H: np.ndarray


def _check_eigenvalues(s, require_gaps):
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.shape[0] < 2:
        raise ValueError("need at least two eigenvalues")
    if not np.all(np.isfinite(s)):
        raise ValueError("eigenvalues must be finite")
    gaps = -np.diff(s)
    if np.any(gaps < 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    if require_gaps and np.any(gaps <= GAP_RTOL * abs(s[0])):
        j = int(np.argmax(gaps <= GAP_RTOL * abs(s[0])))
        raise EigenvalueCollision(
            f"eigenvalues {j + 1} and {j + 2} are not distinct "
            f"(gap {gaps[j]:.3e})"
        )
    if not s[-1] > 0:
        raise NoisePositivity(f"smallest eigenvalue must be positive, got {s[-1]:.3e}")
    return s


def _tail_sums(s):
    # tail[k] = sum_{l >= k} s_l (0-based), i.e. the residual variance for k components
    return np.cumsum(s[::-1])[::-1]


def _cross_block_sums(W):
    """``out[k] = sum of W[a, b] over a < k <= b`` for ``k = 0..p-1``."""
    p = W.shape[0]
    out = np.zeros(p)
    for k in range(1, p):
        out[k] = W[:k, k:].sum()
    return out


def _gap_ratio_sums(s):
    diff = s[:, None] - s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(diff != 0, (s[:, None] + s[None, :]) / diff, 0.0)
    return _cross_block_sums(R)


def sure2_curve(eigenvalues, n, estimator=None, noise_var=None):
    """Closed-form SURE curve from scatter eigenvalues.

    ``values[k] = sum_{l>k} s_l + (2 s_p / n) sum_{j<=k<l} (s_j + s_l)/(s_j - s_l)
    + (s_p / n) (2p + 2(n-1)k - np)``, using 1-based ``j, l``.

    Parameters
    ----------
    eigenvalues : array_like of shape (p,)
        Strictly decreasing eigenvalues.
    n : int
        Sample size.
    estimator : EstimatorKind, optional
        Recorded on the returned curve.
    noise_var : float, optional
        Known noise variance to use instead of the smallest eigenvalue.
    """
    s = _check_eigenvalues(eigenvalues, require_gaps=True)
    n = int(n)
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    p = s.shape[0]
    sigma2 = s[-1] if noise_var is None else float(noise_var)
    k = np.arange(p)
    tail = _tail_sums(s)
    values = (
        tail
        + 2.0 * sigma2 / n * _gap_ratio_sums(s)
        + sigma2 / n * (2 * p + 2 * (n - 1) * k - n * p)
    )
    return SureCurve(
        values=values, criterion=CriterionKind.SURE2,
        estimator=None if estimator is None else EstimatorKind(estimator),
        n=n, eigenvalues=s,
    )


def sure3_curve(eigenvalues, n=None, estimator=None):
    """Asymptotic SURE curve ``sum_{l>k} s_l + s_p (2k - p)``.

    Ties among the eigenvalues are allowed. `n` is only recorded.
    """
    s = _check_eigenvalues(eigenvalues, require_gaps=False)
    p = s.shape[0]
    k = np.arange(p)
    values = _tail_sums(s) + s[-1] * (2 * k - p)
    return SureCurve(
        values=values, criterion=CriterionKind.SURE3,
        estimator=None if estimator is None else EstimatorKind(estimator),
        n=0 if n is None else int(n), eigenvalues=s,
    )


def _require_kind(pair, kind):
    if EstimatorKind(pair.kind) is not kind:
        raise KindMismatch(f"expected a {kind} pair, got {pair.kind}")


def derivative_bundle_cov(X, pair):
    """Location and scatter derivatives of the mean/covariance pair.

    ``h_ij = e_j / n`` and ``H_ij = (e_j y_i' + y_i e_j') / n`` with
    ``y_i = x_i - mean``.
    """
    _require_kind(pair, EstimatorKind.COV)
    X = check_sample(X)
    n, p = X.shape
    Y = X - pair.location
    eye = np.eye(p)
    h = np.broadcast_to(eye / n, (n, p, p)).copy()
    EY = np.einsum("ja,ib->ijab", eye, Y)
    H = (EY + EY.transpose(0, 1, 3, 2)) / n
    return DerivativeBundle(h=h, H=H)


def derivative_bundle_sscm(X, pair):
    """Location and scatter derivatives of the spatial median/SSCM pair.

    With ``y_i = x_i - t``, ``w_i = 1/||y_i||``, ``A_i = w_i (I - y_i y_i'/||y_i||^2)``
    and ``G = sum_i A_i``::

        h_ij = G^{-1} A_i e_j
        H_ij = (1/n) [A_i e_j u_i' + u_i e_j' A_i]
               - (1/n) sum_l [A_l h_ij u_l' + u_l h_ij' A_l]

    where ``u_i = y_i / ||y_i||``. Requires that the sample is not
    collinear and that the location is on no observation.
    """
    _require_kind(pair, EstimatorKind.SSCM)
    X = check_sample(X)
    if is_collinear(X):
        raise DegenerateSample("observations are concentrated on a line")
    n, p = X.shape
    Y = X - pair.location
    r = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    hit = np.flatnonzero(r <= ON_DATUM_TOL)
    if hit.size:
        raise LocationOnDatum(f"location coincides with observation {int(hit[0])}")
    w = 1.0 / r
    U = Y * w[:, None]
    A = w[:, None, None] * (np.eye(p) - np.einsum("ia,ib->iab", U, U))
    G = A.sum(axis=0)
    g = np.linalg.eigvalsh(G)
    if g[0] <= 1e-12 * g[-1]:
        raise SingularScatter("spatial-median Hessian G is singular")
    Ginv = np.linalg.inv(G)
    # h[i, j] = G^{-1} A_i e_j; A_i symmetric so A_i e_j = A[i, j]
    h = np.einsum("cb,ijb->ijc", Ginv, A)
    m = (w[:, None] * U).sum(axis=0)
    K = np.einsum("l,la,lb,lc->abc", w, U, U, U)
    own = np.einsum("ija,ib->ijab", A, U)
    L = np.einsum("ija,b->ijab", h, m) - np.einsum("ijc,cab->ijab", h, K)
    H = own + own.transpose(0, 1, 3, 2) - L - L.transpose(0, 1, 3, 2)
    H /= n
    H = (H + H.transpose(0, 1, 3, 2)) / 2.0
    return DerivativeBundle(h=h, H=H)


def _derivative_sums(X, pair, es, bundle):
    """Generalized degrees of freedom for every ``k = 0..p-1``."""
    n, p = X.shape
    s = es.values
    V = es.vectors
    Y = X - pair.location
    # k + sum_j e_j'(I - P_k) h_ij, summed over i
    hV = np.einsum("ijc,ca->ija", bundle.h, V)
    diag_h = np.einsum("ijj->", bundle.h)
    proj_h = np.einsum("ja,ija->a", V, hV)
    first = np.array([n * k + diag_h - proj_h[:k].sum() for k in range(p)])
    # sum_ij e_j' A_ij y_i, in the eigenbasis of the scatter
    Ht = np.matmul(V.T, np.matmul(bundle.H, V))
    Yt = Y @ V
    Q = np.einsum("ijab,ja,ib->ab", Ht, V, Yt) + np.einsum("ijab,jb,ia->ab", Ht, V, Yt)
    diff = s[:, None] - s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(diff != 0, Q / diff, 0.0)
    return first + _cross_block_sums(W)


def derivative_sum(X, pair, es, k, bundle):
    """``sum_i sum_j d xhat_ij / d x_ij`` for reconstructions on `k` components.

    The reconstruction is ``xhat_i = t + P_k (x_i - t)``; the derivative of
    ``P_k`` follows first-order eigenvector perturbation, which needs
    distinct eigenvalues.
    """
    X = check_sample(X)
    p = X.shape[1]
    if not 0 <= k <= p - 1:
        raise IndexOutOfRange(f"k must lie in [0, {p - 1}], got {k}")
    _check_eigenvalues(es.values, require_gaps=True)
    return float(_derivative_sums(X, pair, es, bundle)[k])


def sure1_curve(
    X,
    kind=EstimatorKind.COV,
    cfg: Optional[FixedPointConfig] = None,
    pair: Optional[LocationScatterPair] = None,
    noise_var=None,
):
    """SURE curve using explicit reconstruction derivatives.

    ``values[k] = sum_{l>k} s_l + (2 s_p / n) * dof(k) - p s_p`` where
    ``dof(k)`` is :func:`derivative_sum`. Only the covariance and SSCM
    pairs have derivative expressions.

    The bundle holds ``n * p**3`` numbers, so memory grows quickly with p.
    """
    kind = EstimatorKind(kind)
    if kind not in (EstimatorKind.COV, EstimatorKind.SSCM):
        raise KindMismatch(f"sure1 is defined only for cov and sscm, got {kind}")
    X = check_sample(X)
    n, p = X.shape
    if pair is None:
        pair = estimate_pair(X, kind, cfg)
    es = sym_eigen(pair.scatter)
    s = _check_eigenvalues(es.values, require_gaps=True)
    if kind is EstimatorKind.COV:
        bundle = derivative_bundle_cov(X, pair)
    else:
        bundle = derivative_bundle_sscm(X, pair)
    sigma2 = s[-1] if noise_var is None else float(noise_var)
    dof = _derivative_sums(X, pair, es, bundle)
    values = _tail_sums(s) + 2.0 * sigma2 / n * dof - p * sigma2
    return SureCurve(
        values=values, criterion=CriterionKind.SURE1, estimator=kind,
        n=n, eigenvalues=s,
    )


def _values(curve):
    if isinstance(curve, SureCurve):
        return curve.values
    return np.asarray(curve, dtype=float)


def _gaussian_loglik(x, floor):
    var = max(x.var(), floor)
    return -0.5 * x.shape[0] * math.log(2 * math.pi * var) - ((x - x.mean()) ** 2).sum() / (2 * var)


def changepoint_select(curve):
    """Dimension at the single mean-variance change in the curve differences.

    Forms ``D_k = values[k+1] - values[k]`` and scans every split into
    ``D_0..D_tau`` and ``D_{tau+1}..D_{p-2}`` (both of length >= 2) for the
    largest Gaussian likelihood with segment-specific mean and variance.
    Returns ``tau + 1``. Falls back to the argmin when no split beats the
    single-segment fit by more than ``1e-9`` in log-likelihood, which
    includes curves too short to admit a split.

    Raises
    ------
    CurveTooShort
        If the curve has fewer than 4 points.
    """
    values = _values(curve)
    p = values.shape[0]
    if p < 4:
        raise CurveTooShort(f"change-point selection needs p >= 4, got {p}")
    D = np.diff(values)
    m = D.shape[0]
    floor = CP_VARIANCE_FLOOR * max(float(np.mean(D ** 2)), np.finfo(float).tiny)
    null = _gaussian_loglik(D, floor)
    best_tau, best = None, -np.inf
    for tau in range(CP_MIN_SEGMENT - 1, m - CP_MIN_SEGMENT):
        ll = _gaussian_loglik(D[: tau + 1], floor) + _gaussian_loglik(D[tau + 1:], floor)
        if ll > best:
            best_tau, best = tau, ll
    if best_tau is None or best - null <= CP_MIN_GAIN:
        return int(np.argmin(values))
    return best_tau + 1


def select_dimension(curve, rule=SelectionRule.ARGMIN):
    """Pick ``d_hat`` from a curve; argmin ties go to the smallest k."""
    rule = SelectionRule(rule)
    values = _values(curve)
    if values.shape[0] < 2:
        raise CurveTooShort("curve must have at least 2 points")
    if rule is SelectionRule.ARGMIN:
        return int(np.argmin(values))
    return changepoint_select(values)


def compute_curve(X, pair, criterion, cfg=None, noise_var=None):
    """Evaluate `criterion` for an already-estimated location-scatter pair."""
    criterion = CriterionKind(criterion)
    n = X.shape[0]
    if criterion is CriterionKind.SURE1:
        return sure1_curve(X, pair.kind, cfg, pair=pair, noise_var=noise_var)
    es = sym_eigen(pair.scatter)
    if criterion is CriterionKind.SURE2:
        return sure2_curve(es.values, n, estimator=pair.kind, noise_var=noise_var)
    return sure3_curve(es.values, n, estimator=pair.kind)


def estimate_dimension(
    X,
    estimator=EstimatorKind.TYLER,
    criterion=CriterionKind.SURE2,
    rule=SelectionRule.ARGMIN,
    cfg: Optional[FixedPointConfig] = None,
):
    """Estimate the latent dimension of `X`.

    Returns
    -------
    d_hat : int
        Selected dimension in ``{0, ..., p - 1}``.
    curve : SureCurve
        The criterion curve the selection was made on.
    """
    X = check_sample(X)
    estimator = EstimatorKind(estimator)
    criterion = CriterionKind(criterion)
    rule = SelectionRule(rule)
    if criterion is CriterionKind.SURE1 and estimator not in (EstimatorKind.COV, EstimatorKind.SSCM):
        raise KindMismatch(f"sure1 is defined only for cov and sscm, got {estimator}")
    pair = estimate_pair(X, estimator, cfg)
    curve = compute_curve(X, pair, criterion, cfg)
    return select_dimension(curve, rule), curve
