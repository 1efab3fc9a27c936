"""Dense linear-algebra primitives: SVD, orthogonal projection, Haar sampling,
spectral norm and the geometric median."""
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DataError, DimensionError

ANCHOR_EPS = _kernels._pykernels.ANCHOR_EPS


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def as_matrix(A, name="matrix"):
    """Validate and return ``A`` as a finite 2-D float array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DataError(f"{name} has non-finite entries")
    return A


def _square(A, name="matrix"):
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def svd(A):
    """Full SVD of a square matrix, ``A = U diag(sigma) V^T``.

    Backed by LAPACK (``gesdd``). Singular values are nonincreasing.
    """
    A = _square(A)
    U, sigma, Vt = np.linalg.svd(A)
    return SvdResult(U, sigma, Vt.T)


def project_orthogonal(A):
    """Nearest orthogonal matrix to ``A`` in Frobenius norm, ``U V^T``.

    No determinant correction: the result may be a reflection.
    """
    U, _, V = svd(A)
    return U @ V.T


def random_orthogonal(d, rng):
    """Haar-distributed matrix on O(d).

    QR of a Gaussian matrix with the signs of ``diag(R)`` folded into Q.
    """
    if int(d) != d or d < 1:
        raise DimensionError(f"dimension must be a positive integer, got {d}")
    rng = np.random.default_rng(rng)
    Z = rng.standard_normal((int(d), int(d)))
    Qm, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Qm * signs


def spectral_norm(A):
    """Largest singular value."""
    A = as_matrix(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def geometric_median(points, tol=1e-10, max_iter=10_000, weights=None):
    """Minimizer of ``sum_j w_j ||x_j - v||`` over ``v``.

    Parameters
    ----------
    points : array_like, shape (n, d)
        One point per row.
    tol : float
        Relative duality-gap tolerance. The returned objective is within
        ``tol`` (relative) of the minimum.
    max_iter : int
        Weiszfeld iteration cap.
    weights : array_like, optional
        Nonnegative weights, default all ones.

    Returns
    -------
    v : ndarray, shape (d,)
    """
    X = as_matrix(np.atleast_2d(points), "points")
    if X.shape[0] == 0:
        raise DataError("geometric median of an empty point list")
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (X.shape[0],) or np.any(w < 0) or w.sum() <= 0:
        raise DataError("weights must be nonnegative with positive sum")
    y, _ = _kernels.geometric_median(X, w, float(tol), int(max_iter))
    return y


def sum_of_distances(points, v):
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return float(np.linalg.norm(X - v, axis=1).sum())
