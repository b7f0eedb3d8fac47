"""Dense numerical kernels: SVD, SPD Cholesky with jitter, triangular solves, normal CDF.

All functions operate on plain float64 numpy arrays and are pure.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import InvalidInput, NotPositiveDefinite, NumericalFailure

SYMMETRY_TOL = 1e-10


def as_matrix(m, name="matrix"):
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class SvdResult:
    """Top-k singular triplets: u (p1 x k), s (k,) descending, v (p2 x k)."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def svd(m, k=None):
    """Top-k SVD of a dense matrix.

    Returns orthonormal U, V with M ~= U diag(s) V^T when k = min(p1, p2).
    """
    a = as_matrix(m)
    kmax = min(a.shape)
    if k is None:
        k = kmax
    if not (1 <= k <= kmax):
        raise InvalidInput(f"k={k} outside [1, {kmax}]")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    return SvdResult(u=u[:, :k].copy(), s=s[:k].copy(), v=vt[:k].T.copy())


def singular_values(m):
    """All singular values, descending, without computing singular vectors."""
    a = as_matrix(m)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc


def cholesky_spd(s):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    The input is symmetrized as (S + S^T)/2 first. On pivot failure a
    diagonal jitter of 1e-12 * trace/p is added, escalating tenfold up to
    1e-6 * trace/p before giving up.
    """
    a = as_matrix(s, "S")
    p = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise InvalidInput(f"S must be square, got {a.shape}")
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(a))):
        raise InvalidInput("S is not symmetric within tolerance")
    a = (a + a.T) / 2.0
    base = np.trace(a) / p if p else 0.0
    jitter = 0.0
    last_pivot = None
    while True:
        try:
            return np.linalg.cholesky(a + jitter * np.eye(p))
        except np.linalg.LinAlgError:
            last_pivot = float(np.min(np.linalg.eigvalsh(a + jitter * np.eye(p))))
            if jitter == 0.0:
                jitter = 1e-12 * abs(base)
                if jitter == 0.0:
                    break
            else:
                jitter *= 10.0
            if jitter > 1e-6 * abs(base):
                break
    raise NotPositiveDefinite(
        f"matrix not positive definite after jitter escalation "
        f"(smallest failing pivot {last_pivot:.3e})",
        pivot=last_pivot,
    )


def solve_spd(chol, b):
    """Solve S x = b given the lower Cholesky factor of S."""
    l = as_matrix(chol, "chol")
    bv = np.asarray(b, dtype=np.float64)
    if bv.shape[0] != l.shape[0]:
        raise InvalidInput(
            f"dimension mismatch: chol is {l.shape}, b has length {bv.shape[0]}"
        )
    y = scipy.linalg.solve_triangular(l, bv, lower=True)
    return scipy.linalg.solve_triangular(l.T, y, lower=False)


def std_normal_cdf(x):
    """Standard normal CDF, accurate to ~1e-15 (erf based)."""
    return ndtr(x)
