import dataclasses

import numpy as np
import pytest
from conftest import fast_scenario
from hypothesis import given, settings
from hypothesis import strategies as st

from dflim import calibration, simulate
from dflim.errors import (
    DegenerateSpectrum,
    DegenerateVariance,
    InfeasibleTarget,
    InsufficientData,
    InvalidInput,
)


def test_estimate_mean_basic():
    frames = [np.full((2, 3), 1.0), np.full((2, 3), 3.0)]
    assert np.allclose(calibration.estimate_mean(frames), 2.0)


def test_estimate_mean_matches_numpy():
    rng = np.random.default_rng(0)
    frames = [rng.standard_normal((4, 5)) for _ in range(7)]
    assert np.allclose(calibration.estimate_mean(frames), np.mean(frames, axis=0))


def test_estimate_mean_errors():
    with pytest.raises(InvalidInput):
        calibration.estimate_mean([])
    with pytest.raises(InvalidInput):
        calibration.estimate_mean([np.zeros((2, 2)), np.zeros((2, 3))])


def test_select_rank_cases():
    assert calibration.select_rank([3.0, 1.0], 0.9) == 1
    assert calibration.select_rank([3.0, 1.0], 0.95) == 2
    assert calibration.select_rank([1.0, 1.0, 1.0, 0.0], 1.0) == 3
    assert calibration.select_rank([5.0], 0.5) == 1
    with pytest.raises(InvalidInput):
        calibration.select_rank([1.0], 0.0)
    with pytest.raises(DegenerateSpectrum):
        calibration.select_rank([0.0, 0.0], 0.9)


@settings(max_examples=100, deadline=None)
@given(
    s=st.lists(st.floats(0.01, 100), min_size=1, max_size=8),
    q=st.floats(0.01, 0.999),
)
def test_select_rank_is_minimal(s, q):
    s = sorted(s, reverse=True)
    r = calibration.select_rank(s, q)
    energy = np.cumsum(np.square(s)) / np.sum(np.square(s))
    assert energy[r - 1] >= q
    if r > 1:
        assert energy[r - 2] < q


def test_build_model_recovers_planted_rank():
    rng = np.random.default_rng(1)
    u, _ = np.linalg.qr(rng.standard_normal((8, 2)))
    v, _ = np.linalg.qr(rng.standard_normal((11, 2)))
    m0 = (u * np.array([10.0, 4.0])) @ v.T
    model = calibration.build_model(m0, q=0.99)
    assert model.basis.r == 2
    assert np.allclose(sorted(model.basis.lam, reverse=True), [10.0, 4.0])
    # basis spans the planted directions up to sign
    assert np.allclose(np.abs(model.basis.u.T @ u), np.eye(2), atol=1e-8)


def test_estimate_moments_matches_numpy():
    rng = np.random.default_rng(2)
    ys = rng.standard_normal((30, 4))
    mu, cov = calibration.estimate_moments(list(ys))
    assert np.allclose(mu, ys.mean(axis=0))
    assert np.allclose(cov, np.cov(ys, rowvar=False))


def test_estimate_moments_two_points():
    mu, cov = calibration.estimate_moments([np.array([0.0, 0.0]), np.array([2.0, 2.0])])
    assert np.allclose(mu, [1.0, 1.0])
    assert np.allclose(cov, [[2.0, 2.0], [2.0, 2.0]])


def test_estimate_moments_insufficient():
    with pytest.raises(InsufficientData):
        calibration.estimate_moments([np.array([1.0, 2.0])])


def test_sigma_t_hat():
    assert abs(calibration.sigma_t_hat([1.0, 3.0]) - np.sqrt(2.0)) < 1e-12
    rng = np.random.default_rng(3)
    t = rng.standard_normal(100)
    assert abs(calibration.sigma_t_hat(t) - np.std(t, ddof=1)) < 1e-14
    with pytest.raises(DegenerateVariance):
        calibration.sigma_t_hat([2.0, 2.0, 2.0])
    with pytest.raises(InsufficientData):
        calibration.sigma_t_hat([1.0])


def test_cvm_hand_oracle():
    # single window of length 3 over (0, 3, 0), worked out by hand: 56/27
    assert abs(calibration.cvm_omega2([0.0, 3.0, 0.0], 3) - 56.0 / 27.0) < 1e-12


def test_cvm_constant_series_is_zero():
    assert calibration.cvm_omega2([5.0] * 20, 5) == 0.0


def test_cvm_matches_naive_loop():
    rng = np.random.default_rng(4)
    t = rng.standard_normal(37)
    m = 9
    n = len(t)
    total = 0.0
    for i in range(n - m + 1):
        window = t[i : i + m]
        bar = window.mean()
        c = 0.0
        for j in range(1, m + 1):
            u = j / m
            g = -24.0 + 150.0 * u - 150.0 * u**2
            c += g * (j**2 / m) * (window[:j].mean() - bar) ** 2
        total += c / m
    assert abs(calibration.cvm_omega2(t, m) - total / (n - m + 1)) < 1e-10


def test_cvm_iid_normal_near_unit_variance():
    rng = np.random.default_rng(5)
    t = rng.standard_normal(20_000)
    assert abs(calibration.cvm_omega2(t, 50) - 1.0) < 0.15


@settings(max_examples=50, deadline=None)
@given(
    t=st.lists(st.floats(-5, 5), min_size=10, max_size=40),
    shift=st.floats(-10, 10),
    scale=st.floats(0.1, 4),
)
def test_cvm_shift_invariant_scale_equivariant(t, shift, scale):
    t = np.asarray(t)
    base = calibration.cvm_omega2(t, 5)
    assert base >= 0.0
    assert abs(calibration.cvm_omega2(t + shift, 5) - base) < 1e-8 * (1 + abs(base))
    assert abs(calibration.cvm_omega2(scale * t, 5) - scale**2 * base) <= 1e-8 * (
        1 + scale**2 * abs(base)
    )


def test_cvm_errors():
    with pytest.raises(InvalidInput):
        calibration.cvm_omega2([1.0, 2.0], 1)
    with pytest.raises(InsufficientData):
        calibration.cvm_omega2([1.0, 2.0], 3)


def test_arl0_rhs_increasing_in_h():
    vals = [calibration.arl0_rhs(h, 2.0, 10.0, 0.01) for h in np.linspace(0, 60, 30)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_arl0_rhs_huge_exponent_is_inf():
    assert calibration.arl0_rhs(1e6, 0.5, 10.0, 0.5) == float("inf")


def test_arl0_rhs_small_drift_series_limit():
    # for tiny d the expression approaches x^2/2 scaling: ARL ~ (h + 1.166 w)^2 / w^2
    w, h = 2.0, 5.0
    val = calibration.arl0_rhs(h, w, 1.0, 1e-7)
    assert abs(val - (h + 1.166 * w) ** 2 / w**2) < 1e-4


def test_solve_control_limit_round_trip():
    for target in (50.0, 200.0, 1000.0):
        h = calibration.solve_control_limit(2.0, 10.0, 0.01, target)
        back = calibration.arl0_rhs(h, 2.0, 10.0, 0.01)
        assert abs(back - target) <= 1e-8 * target


def test_solve_control_limit_monotone_in_target():
    hs = [
        calibration.solve_control_limit(2.0, 10.0, 0.01, t)
        for t in (50.0, 100.0, 200.0, 400.0)
    ]
    assert all(b > a for a, b in zip(hs, hs[1:]))


def test_solve_control_limit_infeasible():
    # the H=0 value already exceeds a tiny target
    with pytest.raises(InfeasibleTarget):
        calibration.solve_control_limit(2.0, 10.0, 0.01, 1e-6)


@pytest.fixture(scope="module")
def small_calibration():
    scn = fast_scenario(length=150, seed=11)
    frames = list(simulate.generate_sequence(scn, rep=0))
    m0 = simulate.background_matrix(scn.background, scn.p1, scn.p2)
    return calibration.calibrate(frames, m0_override=m0, q=0.9), len(frames)


def test_calibrate_in_sample_t_mean_identity(small_calibration):
    # with plug-in moments the in-sample average of T is exactly 2r(n-1)/n
    (model, params), n = small_calibration
    dim = 2 * model.basis.r
    assert abs(params.t_mean - dim * (n - 1) / n) < 1e-8


def test_calibrate_control_limit_consistency(small_calibration):
    (model, params), _ = small_calibration
    back = calibration.arl0_rhs(
        params.control_limit_h, np.sqrt(params.omega0_sq), params.sigma_t, params.c
    )
    assert abs(back - params.target_arl0) <= 1e-8 * params.target_arl0
    assert params.drift == params.t_mean + params.c * params.sigma_t


def test_calibrate_estimated_mean_close_to_background():
    scn = fast_scenario(length=150, seed=11)
    frames = list(simulate.generate_sequence(scn, rep=0))
    model, params = calibration.calibrate(frames, q=0.9)
    m0 = simulate.background_matrix(scn.background, scn.p1, scn.p2)
    # noise std is about 1 per pixel, so the average of 150 frames is close
    assert np.max(np.abs(model.m0 - m0)) < 1.0


def test_calibrate_insufficient_frames():
    with pytest.raises(InsufficientData):
        calibration.calibrate([np.zeros((4, 4))] * 10)


def test_calibrate_short_run_warns():
    scn = fast_scenario(length=60, seed=12)
    frames = list(simulate.generate_sequence(scn, rep=0))
    m0 = simulate.background_matrix(scn.background, scn.p1, scn.p2)
    with pytest.warns(UserWarning):
        calibration.calibrate(frames, m0_override=m0, q=0.9)


def test_save_load_round_trip(tmp_path, small_calibration):
    (model, params), _ = small_calibration
    path = tmp_path / "cal.json"
    calibration.save_calibration(model, params, path)
    model2, params2 = calibration.load_calibration(path)
    assert np.allclose(model2.m0, model.m0)
    assert np.allclose(model2.basis.lam, model.basis.lam)
    assert np.allclose(params2.mu0, params.mu0)
    assert np.allclose(params2.cov0, params.cov0)
    for name in ("sigma_t", "t_mean", "omega0_sq", "c", "target_arl0",
                 "control_limit_h", "batch_size_m"):
        assert getattr(params2, name) == getattr(params, name)


def test_load_rejects_wrong_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": "other"}')
    with pytest.raises(InvalidInput):
        calibration.load_calibration(path)
