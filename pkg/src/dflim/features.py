"""Projection features of a matrix frame and the T^2 monitoring increment.

A frame X is summarized by 2r numbers: the bilinear projections
beta_i = u_i^T X v_i onto the singular directions of the in-control mean,
and gamma_i, the r leading singular values of the residual X - M0.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .errors import InvalidInput

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class ProjectionBasis:
    """Rank-r singular triplets of the in-control mean: lam (r,), u (p1 x r), v (p2 x r)."""

    lam: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        u = linalg.as_matrix(self.u, "u")
        v = linalg.as_matrix(self.v, "v")
        r = lam.shape[0]
        if u.shape[1] != r or v.shape[1] != r:
            raise InvalidInput("basis column counts do not match rank")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise InvalidInput("singular values must be positive and descending")
        for mat, name in ((u, "u"), (v, "v")):
            gram = mat.T @ mat
            if np.max(np.abs(gram - np.eye(r))) > 1e3 * ORTHO_TOL:
                raise InvalidInput(f"{name} columns are not orthonormal")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def r(self):
        return self.lam.shape[0]

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])


@dataclass(frozen=True)
class InControlModel:
    """In-control mean matrix together with its rank-r projection basis."""

    m0: np.ndarray
    basis: ProjectionBasis

    def __post_init__(self):
        m0 = linalg.as_matrix(self.m0, "m0")
        if m0.shape != self.basis.shape:
            raise InvalidInput("m0 shape does not match basis")
        object.__setattr__(self, "m0", m0)

    @property
    def shape(self):
        return self.m0.shape


@dataclass(frozen=True)
class FeatureVector:
    """beta (r,) and gamma (r,) stacked as y = [beta; gamma]."""

    beta: np.ndarray
    gamma: np.ndarray

    def as_array(self):
        return np.concatenate([self.beta, self.gamma])


def project_beta(x, basis):
    """beta_i = u_i^T X v_i for each basis direction."""
    a = linalg.as_matrix(x, "x")
    if a.shape != basis.shape:
        raise InvalidInput(f"frame shape {a.shape} != basis shape {basis.shape}")
    return np.einsum("ji,jk,ki->i", basis.u, a, basis.v)


def residual(x, m0):
    """Elementwise residual X - M0."""
    a = linalg.as_matrix(x, "x")
    b = linalg.as_matrix(m0, "m0")
    if a.shape != b.shape:
        raise InvalidInput(f"frame shape {a.shape} != mean shape {b.shape}")
    return a - b


def project_gamma(resid, r):
    """Top-r singular values of the residual, descending."""
    a = linalg.as_matrix(resid, "resid")
    if not (1 <= r <= min(a.shape)):
        raise InvalidInput(f"r={r} outside [1, {min(a.shape)}]")
    return linalg.singular_values(a)[:r]


def feature_vector(x, model):
    """Assemble y = [beta; gamma] for one frame against an in-control model."""
    beta = project_beta(x, model.basis)
    gamma = project_gamma(residual(x, model.m0), model.basis.r)
    return FeatureVector(beta=beta, gamma=gamma)


def t_statistic(y, mu0, cov0_chol):
    """Mahalanobis-type increment (y - mu0)^T Cov0^{-1} (y - mu0).

    Evaluated as the squared norm of the triangular solve L^{-1}(y - mu0).
    """
    yv = y.as_array() if isinstance(y, FeatureVector) else np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu0, dtype=np.float64)
    l = np.asarray(cov0_chol, dtype=np.float64)
    if yv.shape != mu.shape or l.shape[0] != yv.shape[0]:
        raise InvalidInput("t_statistic: inconsistent dimensions")
    w = scipy.linalg.solve_triangular(l, yv - mu, lower=True)
    return float(w @ w)
