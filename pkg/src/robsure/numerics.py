"""Symmetric-matrix primitives shared by the estimators and criteria."""

from dataclasses import dataclass

import numpy as np

from .exceptions import IndexOutOfRange, NonFiniteInput, SingularScatter

__all__ = [
    "EigenSystem",
    "as_symmetric",
    "sym_eigen",
    "inv_sqrt",
    "sqrt_and_inv_sqrt",
    "projection_onto_top_k",
]

# smallest eigenvalue must exceed this fraction of the largest
PD_RTOL = 1e-12


def as_symmetric(M):
    """Return ``(M + M.T) / 2`` as a float array after validating it.

    Raises
    ------
    ValueError
        If `M` is not a non-empty square matrix.
    NonFiniteInput
        If any entry is NaN or infinite.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteInput("matrix contains NaN or infinite entries")
    return (M + M.T) / 2.0


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues with paired orthonormal eigenvectors.

    Attributes
    ----------
    values : ndarray of shape (p,)
        Eigenvalues, ``values[0] >= values[1] >= ...``.
    vectors : ndarray of shape (p, p)
        Column ``l`` is the unit eigenvector for ``values[l]``.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self):
        return self.values.shape[0]

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T

    def rank_one_projection(self, ell):
        u = self.vectors[:, ell]
        return np.outer(u, u)


def _fix_signs(vectors):
    # largest-magnitude entry positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(M):
    """Eigendecomposition of a symmetric matrix with deterministic signs.

    Parameters
    ----------
    M : array_like of shape (p, p)
        Symmetric matrix; it is symmetrized before decomposition.

    Returns
    -------
    EigenSystem
        Eigenvalues in descending order. Each eigenvector is oriented so
        that its entry of largest magnitude is positive.
    """
    M = as_symmetric(M)
    values, vectors = np.linalg.eigh(M)
    # stable, so exactly tied eigenvalues keep eigh's column order
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = _fix_signs(vectors[:, order])
    values.flags.writeable = False
    vectors.flags.writeable = False
    return EigenSystem(values=values, vectors=vectors)


def _check_pd(values):
    top = values.max()
    if not top > 0 or values.min() <= PD_RTOL * top:
        raise SingularScatter(
            f"matrix is not positive definite (eigenvalue range "
            f"[{values.min():.3e}, {top:.3e}])"
        )


def sqrt_and_inv_sqrt(M):
    """Return the symmetric square root of `M` and its inverse."""
    M = as_symmetric(M)
    values, vectors = np.linalg.eigh(M)
    _check_pd(values)
    root = np.sqrt(values)
    S_half = (vectors * root) @ vectors.T
    S_inv_half = (vectors / root) @ vectors.T
    return (S_half + S_half.T) / 2.0, (S_inv_half + S_inv_half.T) / 2.0


def inv_sqrt(M):
    """Symmetric inverse square root ``N`` of an SPD matrix, ``N M N = I``.

    Raises
    ------
    SingularScatter
        If the smallest eigenvalue is not above ``1e-12`` times the largest.
    """
    return sqrt_and_inv_sqrt(M)[1]


def projection_onto_top_k(es, k):
    """Orthogonal projection onto the span of the first `k` eigenvectors."""
    p = es.dim
    if not 0 <= k <= p:
        raise IndexOutOfRange(f"k must lie in [0, {p}], got {k}")
    Uk = es.vectors[:, :k]
    P = Uk @ Uk.T
    return (P + P.T) / 2.0
