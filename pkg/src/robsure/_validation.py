import numpy as np

from .exceptions import InvalidSample, NonFiniteInput


def check_sample(X):
    """Validate an ``(n, p)`` data matrix and return it as a float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidSample(f"expected a 2-d data matrix, got {X.ndim} dimension(s)")
    n, p = X.shape
    if n < 2 or p < 2:
        raise InvalidSample(f"need n >= 2 and p >= 2, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("sample contains NaN or infinite entries")
    return X


def check_location(location, p):
    location = np.asarray(location, dtype=float)
    if location.shape != (p,):
        raise ValueError(f"location must have shape ({p},), got {location.shape}")
    if not np.all(np.isfinite(location)):
        raise NonFiniteInput("location contains NaN or infinite entries")
    return location


def is_collinear(X, rtol=1e-12):
    """True when the centered rows span at most one dimension."""
    Y = X - X.mean(axis=0)
    sv = np.linalg.svd(Y, compute_uv=False)
    if sv[0] == 0:
        return True
    return sv.shape[0] < 2 or sv[1] <= rtol * sv[0]
