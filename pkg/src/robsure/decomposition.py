"""scikit-learn compatible estimators."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimators import EstimatorKind, FixedPointConfig, estimate_pair
from .numerics import sym_eigen
from .sure import CriterionKind, SelectionRule, compute_curve, select_dimension

__all__ = ["RobustScatter", "SureDimension"]


def _fixed_point_config(tol, max_iter):
    if tol is None and max_iter is None:
        return None
    return FixedPointConfig(
        tol=1e-8 if tol is None else tol,
        max_iter=200 if max_iter is None else max_iter,
    )


class RobustScatter(BaseEstimator):
    """Location and scatter (or det-1 shape) estimate.

    Parameters
    ----------
    estimator : {'cov', 'sscm', 'tyler', 'hr'}, default='tyler'
        Location-scatter pair to compute.
    tol : float, optional
        Fixed-point tolerance; solver defaults are used when omitted.
    max_iter : int, optional
        Fixed-point iteration budget.

    Attributes
    ----------
    location_ : ndarray of shape (n_features,)
    scatter_ : ndarray of shape (n_features, n_features)
    n_iter_ : int
    """

    def __init__(self, estimator="tyler", tol=None, max_iter=None):
        self.estimator = estimator
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2, ensure_min_features=2)
        pair = estimate_pair(X, EstimatorKind(self.estimator), _fixed_point_config(self.tol, self.max_iter))
        self.n_features_in_ = X.shape[1]
        self.location_ = pair.location
        self.scatter_ = pair.scatter
        self.n_iter_ = pair.iterations
        self.pair_ = pair
        return self


class SureDimension(TransformerMixin, BaseEstimator):
    """Latent dimension selection by a robust SURE criterion.

    Fitting estimates a location-scatter pair, evaluates the chosen SURE
    criterion for ``k = 0, ..., p - 1`` retained components and keeps the
    selected number ``n_components_``. :meth:`transform` then projects the
    centered data onto the leading eigenvectors of the scatter estimate.

    Parameters
    ----------
    estimator : {'cov', 'sscm', 'tyler', 'hr'}, default='tyler'
    criterion : {'sure1', 'sure2', 'sure3'}, default='sure2'
        ``sure1`` is available only with 'cov' and 'sscm'.
    rule : {'argmin', 'cp'}, default='argmin'
        Select the minimizing index or the change point of the curve's
        successive differences.
    tol, max_iter : optional
        Fixed-point solver settings.

    Attributes
    ----------
    n_components_ : int
        Selected dimension.
    curve_ : SureCurve
    location_ : ndarray of shape (n_features,)
    scatter_ : ndarray of shape (n_features, n_features)
    eigenvalues_ : ndarray of shape (n_features,)
    components_ : ndarray of shape (n_components_, n_features)
        Leading eigenvectors of ``scatter_``, one per row.

    Examples
    --------
    >>> import numpy as np
    >>> from robsure import SureDimension
    >>> rng = np.random.default_rng(0)
    >>> X = rng.standard_normal((500, 5)) * [3.0, 2.0, 0.5, 0.5, 0.5]
    >>> SureDimension(estimator="cov").fit(X).n_components_
    2
    """

    def __init__(self, estimator="tyler", criterion="sure2", rule="argmin", tol=None, max_iter=None):
        self.estimator = estimator
        self.criterion = criterion
        self.rule = rule
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2, ensure_min_features=2)
        cfg = _fixed_point_config(self.tol, self.max_iter)
        pair = estimate_pair(X, EstimatorKind(self.estimator), cfg)
        curve = compute_curve(X, pair, CriterionKind(self.criterion), cfg)
        d = select_dimension(curve, SelectionRule(self.rule))
        es = sym_eigen(pair.scatter)
        self.n_features_in_ = X.shape[1]
        self.location_ = pair.location
        self.scatter_ = pair.scatter
        self.eigenvalues_ = es.values
        self.components_ = es.vectors[:, :d].T.copy()
        self.n_components_ = d
        self.curve_ = curve
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X)
        return (X - self.location_) @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = np.asarray(X, dtype=float)
        return self.location_ + X @ self.components_
