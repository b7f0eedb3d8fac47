"""Closed-form run-length approximations and the three-term mean-shift
decomposition of the T statistic under a change.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .errors import InvalidInput, NotPositiveDefinite


@dataclass(frozen=True)
class ArlInputs:
    h: float
    d_t: float
    omega_sq: float

    def __post_init__(self):
        if not (self.h > 0 and self.omega_sq > 0):
            raise InvalidInput("h and omega_sq must be positive")


def arl_approx(inp):
    """Diffusion approximation of the ARL at drift d_t and long-run variance omega_sq.

    The zero-drift branch H^2/Omega^2 is taken when |d_t| is below
    1e-12 * omega_sq / h, where the general branch is numerically 0/0.
    """
    h, d, w2 = inp.h, inp.d_t, inp.omega_sq
    if abs(d) < 1e-12 * w2 / h:
        return h * h / w2
    x = -2.0 * h * d / w2
    if x > 700.0:
        return float("inf")
    return w2 / (2.0 * d * d) * (np.expm1(x) - x)


def arl1_large_omega_approx(h, omega1_sq):
    """Leading-order out-of-control ARL when the post-change variability is large."""
    if not (h > 0 and omega1_sq > 0):
        raise InvalidInput("h and omega1_sq must be positive")
    return 2.0 * h * h / omega1_sq


@dataclass(frozen=True)
class BlockCov:
    """Block pieces of the pre/post-change feature covariance and mean shift.

    sigma_beta (r x r), p and p_tilde (r x r cross blocks), sigma_gamma and
    sigma_gamma_tilde (r x r), delta_beta and delta_gamma (r,).
    """

    sigma_beta: np.ndarray
    p: np.ndarray
    sigma_gamma: np.ndarray
    p_tilde: np.ndarray
    sigma_gamma_tilde: np.ndarray
    delta_beta: np.ndarray
    delta_gamma: np.ndarray

    @property
    def r(self):
        return np.asarray(self.sigma_beta).shape[0]

    def sigma(self):
        return np.block(
            [[self.sigma_beta, self.p], [np.transpose(self.p), self.sigma_gamma]]
        )

    def sigma_tilde(self):
        return np.block(
            [
                [self.sigma_beta, self.p_tilde],
                [np.transpose(self.p_tilde), self.sigma_gamma_tilde],
            ]
        )

    def delta(self):
        return np.concatenate([self.delta_beta, self.delta_gamma])


def delta_decomposition(bc):
    """Split the post-change mean shift of T into (delta1, delta2, delta3).

    delta1 tracks the change of the gamma-block Schur complement, delta2 the
    change of the beta/gamma cross covariance, delta3 the squared mean shift.
    All Schur complements are handled through Cholesky factors.
    """
    r = bc.r
    lb = linalg.cholesky_spd(np.asarray(bc.sigma_beta, dtype=np.float64))
    w = scipy.linalg.solve_triangular(lb, np.asarray(bc.p, dtype=np.float64), lower=True)
    w_t = scipy.linalg.solve_triangular(
        lb, np.asarray(bc.p_tilde, dtype=np.float64), lower=True
    )
    schur = np.asarray(bc.sigma_gamma, dtype=np.float64) - w.T @ w
    schur_t = np.asarray(bc.sigma_gamma_tilde, dtype=np.float64) - w_t.T @ w_t
    try:
        ls = linalg.cholesky_spd(schur)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            f"pre-change Schur complement is not SPD ({exc})", pivot=exc.pivot
        ) from exc
    try:
        linalg.cholesky_spd(schur_t)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            f"post-change Schur complement is not SPD ({exc})", pivot=exc.pivot
        ) from exc
    delta1 = float(np.trace(linalg.solve_spd(ls, schur_t))) - r
    diff = w - w_t
    delta2 = float(np.trace(linalg.solve_spd(ls, diff.T @ diff)))
    e = scipy.linalg.solve_triangular(
        lb, np.asarray(bc.delta_beta, dtype=np.float64), lower=True
    )
    v = np.asarray(bc.delta_gamma, dtype=np.float64) - w.T @ e
    delta3 = float(e @ e) + float(v @ linalg.solve_spd(ls, v))
    return delta1, delta2, delta3
