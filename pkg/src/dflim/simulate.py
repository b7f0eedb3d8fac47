"""Synthetic spatiotemporally correlated matrix processes.

Generates low-rank chessboard backgrounds, tri-diagonal/exponential spatial
covariances, matrix-normal or exponential-transformed noise, moving-average
temporal mixing, and four deterministic shift patterns. Everything is a pure
function of (config, seed); each (replication, frame) draws from an
independent counter-derived stream.
"""

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import log_ndtr

from . import linalg
from .errors import InvalidInput, ParseError

SCN_SCHEMA = "dflim-scn-v1"
DEFAULT_DIMS = (100, 200)
# Fast desk-scale variants; block/radius/period constants stay in pixel units.
SUPPORTED_DIMS = {(100, 200), (50, 100), (40, 80)}

SPARSE_AMPLITUDE = 3.0
RING_AMPLITUDE = 0.173
SINE_AMPLITUDE = 0.283


@dataclass(frozen=True)
class CovSpec:
    kind: str  # tri_diagonal | exponential | identity
    dim: int
    rho: float = 0.3

    def __post_init__(self):
        if self.kind not in ("tri_diagonal", "exponential", "identity"):
            raise InvalidInput(f"unknown covariance kind {self.kind!r}")
        if self.dim < 1:
            raise InvalidInput("covariance dim must be positive")
        if self.kind != "identity" and not (0.0 < self.rho < 1.0):
            raise InvalidInput("rho must lie in (0, 1)")


@dataclass(frozen=True)
class NoiseSpec:
    dist: str  # normal | exp_transformed
    row_cov: CovSpec
    col_cov: CovSpec

    def __post_init__(self):
        if self.dist not in ("normal", "exp_transformed"):
            raise InvalidInput(f"unknown noise distribution {self.dist!r}")


@dataclass(frozen=True)
class TemporalSpec:
    lag: int = 5
    phi: float = 0.5

    def __post_init__(self):
        if self.lag < 0:
            raise InvalidInput("lag must be nonnegative")
        if not (0.0 < self.phi < 1.0):
            raise InvalidInput("phi must lie in (0, 1)")


@dataclass(frozen=True)
class ScenarioConfig:
    p1: int
    p2: int
    background: str  # chessboard2 | chessboard2_plus_rank3
    shift: str  # none | sparse | ring | sine | chessboard
    noise: NoiseSpec
    temporal: TemporalSpec
    length: int
    seed: int
    shift_amplitude: float = 1.0

    def __post_init__(self):
        if self.background not in ("chessboard2", "chessboard2_plus_rank3"):
            raise InvalidInput(f"unknown background {self.background!r}")
        if self.shift not in ("none", "sparse", "ring", "sine", "chessboard"):
            raise InvalidInput(f"unknown shift {self.shift!r}")
        if self.length < 1:
            raise InvalidInput("length must be positive")
        if self.noise.row_cov.dim != self.p1 or self.noise.col_cov.dim != self.p2:
            raise InvalidInput("covariance dims must match frame shape")


def _check_dims(p1, p2):
    if (p1, p2) not in SUPPORTED_DIMS:
        raise InvalidInput(
            f"dims ({p1}, {p2}) unsupported; choose one of {sorted(SUPPORTED_DIMS)}"
        )


def chessboard_mean(p1=100, p2=200):
    """Rank-two chessboard background of +-0.1 blocks (10-row by 40-column tiles)."""
    _check_dims(p1, p2)
    m = np.zeros((p1, p2))
    o1 = np.arange(1, p1 + 1) - 1  # 0-based row offset within the 10-row tile
    o2 = np.arange(1, p2 + 1) - 1
    row_top = (o1 % 10) < 5
    col_off = o2 % 40 + 1  # 1-based offset within the 40-column tile
    m[np.ix_(row_top, (col_off >= 11) & (col_off <= 20))] = 0.1
    m[np.ix_(~row_top, (col_off >= 21) & (col_off <= 30))] = 0.1
    m[np.ix_(row_top, (col_off >= 31) & (col_off <= 40))] = -0.1
    m[np.ix_(~row_top, (col_off >= 1) & (col_off <= 10))] = -0.1
    return m


def rank_k_addon(p1=100, p2=200, k=3):
    """Deterministic smooth rank-k matrix orthogonal to the chessboard directions.

    Built from sinusoid profiles orthogonalized against the chessboard's
    singular vectors, scaled so its top singular value is five times the
    chessboard's, with a (1, 0.8, 0.6, ...) taper for spectral separation.
    """
    _check_dims(p1, p2)
    if k < 1:
        raise InvalidInput("k must be positive")
    board = chessboard_mean(p1, p2)
    res = linalg.svd(board, 2)
    lam1 = res.s[0]

    def smooth_basis(n, anchor, count):
        grid = (np.arange(n) + 0.5) / n
        cols = np.column_stack(
            [np.sin((i + 1) * np.pi * grid) for i in range(count + anchor.shape[1])]
        )
        # remove the chessboard directions, then orthonormalize
        cols -= anchor @ (anchor.T @ cols)
        qmat, _ = np.linalg.qr(cols)
        return qmat[:, :count]

    u = smooth_basis(p1, res.u, k)
    v = smooth_basis(p2, res.v, k)
    scales = 5.0 * lam1 * (1.0 - 0.2 * np.arange(k))
    if np.any(scales <= 0):
        raise InvalidInput(f"k={k} too large for the fixed spectral taper")
    return (u * scales) @ v.T


def background_matrix(kind, p1, p2):
    """In-control mean for a named background."""
    board = chessboard_mean(p1, p2)
    if kind == "chessboard2":
        return board
    if kind == "chessboard2_plus_rank3":
        return board + rank_k_addon(p1, p2, 3)
    raise InvalidInput(f"unknown background {kind!r}")


def make_cov(spec):
    """Spatial covariance matrix for one side of the frame."""
    n, rho = spec.dim, spec.rho
    if spec.kind == "identity":
        return np.eye(n)
    if spec.kind == "tri_diagonal":
        m = np.eye(n)
        idx = np.arange(n - 1)
        m[idx, idx + 1] = rho
        m[idx + 1, idx] = rho
        return m
    i = np.arange(n)
    return rho ** np.abs(i[:, None] - i[None, :])


def sample_matrix_normal(row_chol, col_chol, rng):
    """One matrix-normal draw: L_row Z L_col^T with Z i.i.d. standard normal."""
    z = rng.standard_normal((row_chol.shape[0], col_chol.shape[0]))
    return row_chol @ z @ col_chol.T


def exp_transform(eps_tilde):
    """Elementwise -log(1 - Phi(x)); maps standard normal entries to Exp(1).

    Computed as -log_ndtr(-x), which stays finite and accurate far into the
    tail (no clamping needed even for x > 38).
    """
    x = np.asarray(eps_tilde, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInput("exp_transform input must be finite")
    return -log_ndtr(-x)


def shift_matrix(kind, p1=100, p2=200, amplitude=1.0):
    """Deterministic mean-shift pattern A."""
    _check_dims(p1, p2)
    if kind == "chessboard":
        return amplitude * chessboard_mean(p1, p2)
    a = np.zeros((p1, p2))
    if kind == "sparse":
        # 6x6 block of 3's at rows 8..13, cols 18..23 (1-based)
        a[7:13, 17:23] = SPARSE_AMPLITUDE
    elif kind == "ring":
        c1, c2 = p1 / 2, p2 / 2
        j1 = np.arange(1, p1 + 1)[:, None]
        j2 = np.arange(1, p2 + 1)[None, :]
        radius = np.floor(np.sqrt((j1 - c1) ** 2 + (j2 - c2) ** 2)).astype(int)
        phase = radius % 12
        a[phase <= 3] = RING_AMPLITUDE
        a[(phase >= 8) & (phase <= 11)] = -RING_AMPLITUDE
    elif kind == "sine":
        j1 = np.arange(1, p1 + 1)[:, None]
        j2 = np.arange(1, p2 + 1)[None, :]
        a = SINE_AMPLITUDE * np.sin(j2 * np.pi / 5) * np.sin(2 * j1 * np.pi / 5)
    else:
        raise InvalidInput(f"unknown shift kind {kind!r}")
    return amplitude * a


def _frame_rng(seed, rep, noise_index):
    # noise_index is the absolute noise time shifted to be nonnegative
    return np.random.default_rng([int(seed), int(rep), int(noise_index)])


def _draw_noise(cfg, row_chol, col_chol, rep, noise_index):
    rng = _frame_rng(cfg.seed, rep, noise_index)
    eps = sample_matrix_normal(row_chol, col_chol, rng)
    if cfg.noise.dist == "exp_transformed":
        eps = exp_transform(eps)
    return eps


def generate_sequence(cfg, shift_at: Optional[int] = None, rep: int = 0):
    """Yield frames 1..length of the configured process.

    Frames from shift_at onward (1-based) include the shift pattern. The
    moving-average buffer is warmed with `lag` pre-draws so the first frame
    already carries the full temporal structure.
    """
    ell, phi = cfg.temporal.lag, cfg.temporal.phi
    weights = phi ** np.arange(ell + 1)
    m0 = background_matrix(cfg.background, cfg.p1, cfg.p2)
    a = (
        shift_matrix(cfg.shift, cfg.p1, cfg.p2, cfg.shift_amplitude)
        if cfg.shift != "none"
        else None
    )
    row_chol = linalg.cholesky_spd(make_cov(cfg.noise.row_cov))
    col_chol = linalg.cholesky_spd(make_cov(cfg.noise.col_cov))
    # buffer[j] holds eps_{t-j}; noise time s is keyed by the stream index s+ell
    buffer = [
        _draw_noise(cfg, row_chol, col_chol, rep, s + ell)
        for s in range(1, -ell, -1)
    ]
    for t in range(1, cfg.length + 1):
        if t > 1:
            buffer.pop()
            buffer.insert(0, _draw_noise(cfg, row_chol, col_chol, rep, t + ell))
        mix = weights[0] * buffer[0]
        for j in range(1, ell + 1):
            mix += weights[j] * buffer[j]
        frame = m0 + mix
        if a is not None and shift_at is not None and t >= shift_at:
            frame = frame + a
        yield frame


def scenario_to_json_dict(cfg):
    return {
        "schema": SCN_SCHEMA,
        "p1": cfg.p1,
        "p2": cfg.p2,
        "background": cfg.background,
        "shift": cfg.shift,
        "shift_amplitude": cfg.shift_amplitude,
        "noise": {
            "dist": cfg.noise.dist,
            "row_cov": {"kind": cfg.noise.row_cov.kind, "rho": cfg.noise.row_cov.rho},
            "col_cov": {"kind": cfg.noise.col_cov.kind, "rho": cfg.noise.col_cov.rho},
        },
        "temporal": {"lag": cfg.temporal.lag, "phi": cfg.temporal.phi},
        "length": cfg.length,
        "seed": cfg.seed,
    }


def save_scenario(cfg, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_json_dict(cfg), fh, indent=2)


def scenario_from_json_dict(doc):
    if doc.get("schema") != SCN_SCHEMA:
        raise ParseError(f"unexpected scenario schema {doc.get('schema')!r}")
    known = {
        "schema",
        "p1",
        "p2",
        "background",
        "shift",
        "shift_amplitude",
        "noise",
        "temporal",
        "length",
        "seed",
    }
    extra = set(doc) - known
    if extra:
        raise ParseError(f"unknown scenario fields: {sorted(extra)}")
    noise = doc["noise"]
    return ScenarioConfig(
        p1=int(doc["p1"]),
        p2=int(doc["p2"]),
        background=doc["background"],
        shift=doc["shift"],
        shift_amplitude=float(doc.get("shift_amplitude", 1.0)),
        noise=NoiseSpec(
            dist=noise["dist"],
            row_cov=CovSpec(
                kind=noise["row_cov"]["kind"],
                dim=int(doc["p1"]),
                rho=float(noise["row_cov"].get("rho", 0.3)),
            ),
            col_cov=CovSpec(
                kind=noise["col_cov"]["kind"],
                dim=int(doc["p2"]),
                rho=float(noise["col_cov"].get("rho", 0.3)),
            ),
        ),
        temporal=TemporalSpec(
            lag=int(doc["temporal"]["lag"]), phi=float(doc["temporal"]["phi"])
        ),
        length=int(doc["length"]),
        seed=int(doc["seed"]),
    )


def load_scenario(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_json_dict(doc)


def with_seed(cfg, seed):
    """Copy of the scenario with a different base seed."""
    return replace(cfg, seed=int(seed))
