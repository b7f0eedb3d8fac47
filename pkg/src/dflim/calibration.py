"""Setup phase: estimate the in-control model, feature moments, long-run variance,
and solve the control limit for a target in-control average run length.
"""

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import features, linalg
from .errors import (
    DegenerateSpectrum,
    DegenerateVariance,
    DflimError,
    InfeasibleTarget,
    InsufficientData,
    InvalidInput,
    NotPositiveDefinite,
)
from .features import InControlModel, ProjectionBasis

SIEGMUND_CORRECTION = 1.166
DEFAULT_C = 0.01
DEFAULT_BATCH_M = 50
CAL_SCHEMA = "dflim-cal-v1"


@dataclass(frozen=True)
class CalibrationParams:
    """Everything the monitor needs beyond the in-control model."""

    mu0: np.ndarray
    cov0: np.ndarray
    cov0_chol: np.ndarray
    sigma_t: float
    t_mean: float
    omega0_sq: float
    c: float
    target_arl0: float
    control_limit_h: float
    batch_size_m: int
    provenance: dict = field(default_factory=dict)

    @property
    def drift(self):
        return self.t_mean + self.c * self.sigma_t


def estimate_mean(frames):
    """Elementwise sample average of a list of equally shaped frames."""
    if len(frames) == 0:
        raise InvalidInput("cannot average an empty frame list")
    acc = np.zeros_like(np.asarray(frames[0], dtype=np.float64))
    for i, f in enumerate(frames):
        a = np.asarray(f, dtype=np.float64)
        if a.shape != acc.shape:
            raise InvalidInput(f"frame {i} shape {a.shape} != {acc.shape}")
        acc += a
    return acc / len(frames)


def select_rank(singular_values, q):
    """Smallest r whose cumulative squared-energy fraction reaches q."""
    s = np.asarray(singular_values, dtype=np.float64)
    if not (0.0 < q <= 1.0):
        raise InvalidInput(f"q={q} outside (0, 1]")
    energy = s**2
    total = energy.sum()
    if total <= 0.0:
        raise DegenerateSpectrum("all singular values are zero")
    frac = np.cumsum(energy) / total
    # Guard rounding at q == 1.0: all nonzero values are needed.
    if q == 1.0:
        return int(np.count_nonzero(s))
    return int(np.searchsorted(frac, q) + 1)


def build_model(m0, q):
    """SVD of m0, rank selection by energy threshold q, truncated basis."""
    res = linalg.svd(m0)
    r = select_rank(res.s, q)
    basis = ProjectionBasis(lam=res.s[:r], u=res.u[:, :r], v=res.v[:, :r])
    return InControlModel(m0=np.asarray(m0, dtype=np.float64), basis=basis)


def estimate_moments(ys):
    """Sample mean and unbiased sample covariance of feature vectors."""
    arr = np.array(
        [y.as_array() if isinstance(y, features.FeatureVector) else y for y in ys],
        dtype=np.float64,
    )
    n, _ = arr.shape
    if n < 2:
        raise InsufficientData("need at least 2 feature vectors")
    mu = arr.mean(axis=0)
    centered = arr - mu
    cov = centered.T @ centered / (n - 1)
    return mu, cov


def sigma_t_hat(ts):
    """Sample standard deviation (n-1 denominator) of the T series."""
    t = np.asarray(ts, dtype=np.float64)
    if t.shape[0] < 2:
        raise InsufficientData("need at least 2 values for sigma_T")
    if np.ptp(t) == 0.0:
        raise DegenerateVariance("constant T series; sigma_T undefined")
    return float(np.std(t, ddof=1))


def _cvm_weight(u):
    return -24.0 + 150.0 * u - 150.0 * u**2


def cvm_omega2(ts, m):
    """Overlapping weighted Cramer-von Mises estimator of the long-run variance.

    For each window start i, C_i = (1/m) sum_j g(j/m) (j^2/m) (Tbar_{i,j} - Tbar_i)^2
    with partial means Tbar_{i,j} over the first j window entries; the estimate is
    the average of C_i over all n - m + 1 overlapping windows.
    """
    t = np.asarray(ts, dtype=np.float64)
    n = t.shape[0]
    if m < 2:
        raise InvalidInput("batch size m must be at least 2")
    if n < m:
        raise InsufficientData(f"need n >= m, got n={n}, m={m}")
    j = np.arange(1, m + 1)
    w = _cvm_weight(j / m) * (j**2) / m
    prefix = np.concatenate([[0.0], np.cumsum(t)])
    starts = np.arange(n - m + 1)
    # partial[i, j-1] = mean of t[i : i+j]
    partial = (prefix[starts[:, None] + j[None, :]] - prefix[starts[:, None]]) / j
    batch_mean = partial[:, -1]
    c = (w[None, :] * (partial - batch_mean[:, None]) ** 2).sum(axis=1) / m
    return float(c.mean())


def arl0_rhs(h, omega0, sigma_t, c):
    """In-control ARL at control limit h under the diffusion approximation,
    with the reflected-boundary correction 1.166*omega0 added to h.
    """
    if omega0 <= 0 or sigma_t <= 0 or c <= 0:
        raise InvalidInput("omega0, sigma_t, c must all be positive")
    omega_sq = omega0**2
    d = c * sigma_t
    x = 2.0 * d * (h + SIEGMUND_CORRECTION * omega0) / omega_sq
    if x > 700.0:
        return float("inf")
    return omega_sq / (2.0 * d**2) * (np.expm1(x) - x)


def solve_control_limit(omega0, sigma_t, c, target_arl0):
    """Invert arl0_rhs for H by bracketing and bisection."""
    if target_arl0 <= 0:
        raise InvalidInput("target_arl0 must be positive")
    at_zero = arl0_rhs(0.0, omega0, sigma_t, c)
    if target_arl0 <= at_zero:
        raise InfeasibleTarget(
            f"target ARL0 {target_arl0:g} is not above the H=0 value {at_zero:g}"
        )
    hi = max(omega0, 1e-8)
    for _ in range(200):
        if arl0_rhs(hi, omega0, sigma_t, c) >= target_arl0:
            break
        hi *= 2.0
    else:
        raise InfeasibleTarget("could not bracket the target ARL0")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = arl0_rhs(mid, omega0, sigma_t, c)
        if abs(val - target_arl0) <= 1e-10 * target_arl0:
            return mid
        if val < target_arl0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate(
    frames,
    m0_override=None,
    q=0.9,
    c=DEFAULT_C,
    target_arl0=200.0,
    batch_m=DEFAULT_BATCH_M,
    provenance=None,
):
    """Full setup phase on in-control frames.

    Returns (InControlModel, CalibrationParams). If m0_override is given it is
    used as the in-control mean; otherwise the sample average is taken.
    """
    n = len(frames)
    if n < batch_m:
        raise InsufficientData(
            f"calibration needs at least batch_m={batch_m} frames, got {n}"
        )
    if n < 2 * batch_m:
        warnings.warn(
            f"n={n} < 2m={2 * batch_m}: the long-run variance estimate is unstable",
            stacklevel=2,
        )
    m0 = (
        np.asarray(m0_override, dtype=np.float64)
        if m0_override is not None
        else estimate_mean(frames)
    )
    try:
        model = build_model(m0, q)
    except DflimError as exc:
        raise type(exc)(f"model construction failed: {exc}") from exc
    ys = [features.feature_vector(x, model) for x in frames]
    dim = 2 * model.basis.r
    if n < dim + 2:
        raise InsufficientData(
            f"calibration needs at least 2r+2 = {dim + 2} frames for an "
            f"invertible feature covariance, got {n}"
        )
    mu0, cov0 = estimate_moments(ys)
    try:
        chol = linalg.cholesky_spd(cov0)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            f"feature covariance factorization failed ({exc}); "
            "try a smaller q to reduce the number of features",
            pivot=exc.pivot,
        ) from exc
    dim = mu0.shape[0]
    floor = 1e-10 * np.trace(cov0) / dim
    if float(np.min(np.diag(chol)) ** 2) < floor:
        raise NotPositiveDefinite(
            "feature covariance is numerically singular; "
            "try a smaller q to reduce the number of features",
            pivot=float(np.min(np.diag(chol)) ** 2),
        )
    ts = [features.t_statistic(y, mu0, chol) for y in ys]
    t_mean = float(np.mean(ts))
    sigma_t = sigma_t_hat(ts)
    omega0_sq = cvm_omega2(ts, batch_m)
    if omega0_sq <= 0:
        raise DegenerateVariance("long-run variance estimate is not positive")
    h = solve_control_limit(np.sqrt(omega0_sq), sigma_t, c, target_arl0)
    prov = {"n": n, "q": q, "c": c, "m": batch_m, "target_arl0": target_arl0}
    if provenance:
        prov.update(provenance)
    params = CalibrationParams(
        mu0=mu0,
        cov0=cov0,
        cov0_chol=chol,
        sigma_t=sigma_t,
        t_mean=t_mean,
        omega0_sq=omega0_sq,
        c=c,
        target_arl0=target_arl0,
        control_limit_h=h,
        batch_size_m=batch_m,
        provenance=prov,
    )
    return model, params


def to_json_dict(model, params):
    """Serialize a calibration to the versioned JSON document."""
    return {
        "schema": CAL_SCHEMA,
        "m0": model.m0.tolist(),
        "basis": {
            "lam": model.basis.lam.tolist(),
            "u": model.basis.u.tolist(),
            "v": model.basis.v.tolist(),
        },
        "mu0": params.mu0.tolist(),
        "cov0": params.cov0.tolist(),
        "sigma_t": params.sigma_t,
        "t_mean": params.t_mean,
        "omega0_sq": params.omega0_sq,
        "c": params.c,
        "target_arl0": params.target_arl0,
        "control_limit_h": params.control_limit_h,
        "batch_size_m": params.batch_size_m,
        "provenance": params.provenance,
    }


def save_calibration(model, params, path):
    with open(path, "w") as fh:
        json.dump(to_json_dict(model, params), fh)


def load_calibration(path):
    """Read back a dflim-cal-v1 JSON document."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != CAL_SCHEMA:
        raise InvalidInput(f"unexpected calibration schema {doc.get('schema')!r}")
    basis = ProjectionBasis(
        lam=np.array(doc["basis"]["lam"]),
        u=np.array(doc["basis"]["u"]),
        v=np.array(doc["basis"]["v"]),
    )
    model = InControlModel(m0=np.array(doc["m0"]), basis=basis)
    cov0 = np.array(doc["cov0"])
    params = CalibrationParams(
        mu0=np.array(doc["mu0"]),
        cov0=cov0,
        cov0_chol=linalg.cholesky_spd(cov0),
        sigma_t=doc["sigma_t"],
        t_mean=doc["t_mean"],
        omega0_sq=doc["omega0_sq"],
        c=doc["c"],
        target_arl0=doc["target_arl0"],
        control_limit_h=doc["control_limit_h"],
        batch_size_m=doc["batch_size_m"],
        provenance=doc.get("provenance", {}),
    )
    return model, params
