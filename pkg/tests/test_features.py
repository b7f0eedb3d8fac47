import numpy as np
import pytest

from dflim import calibration, features, linalg
from dflim.errors import InvalidInput


@pytest.fixture(scope="module")
def small_model():
    rng = np.random.default_rng(100)
    u, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    v, _ = np.linalg.qr(rng.standard_normal((9, 2)))
    lam = np.array([5.0, 2.0])
    m0 = (u * lam) @ v.T
    basis = features.ProjectionBasis(lam=lam, u=u, v=v)
    return features.InControlModel(m0=m0, basis=basis)


def test_beta_of_mean_is_lambda(small_model):
    beta = features.project_beta(small_model.m0, small_model.basis)
    assert np.max(np.abs(beta - small_model.basis.lam)) < 1e-10


def test_beta_scaled_mean(small_model):
    beta = features.project_beta(1.5 * small_model.m0, small_model.basis)
    assert np.allclose(beta, 1.5 * small_model.basis.lam)


def test_beta_matches_double_loop_oracle(small_model):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 9))
    beta = features.project_beta(x, small_model.basis)
    b = small_model.basis
    for i in range(b.r):
        acc = 0.0
        for j1 in range(6):
            for j2 in range(9):
                acc += b.u[j1, i] * x[j1, j2] * b.v[j2, i]
        assert abs(beta[i] - acc) < 1e-12


def test_beta_linearity(small_model):
    rng = np.random.default_rng(2)
    x1, x2 = rng.standard_normal((2, 6, 9))
    lhs = features.project_beta(2.0 * x1 - 3.0 * x2, small_model.basis)
    rhs = 2.0 * features.project_beta(x1, small_model.basis) - 3.0 * features.project_beta(
        x2, small_model.basis
    )
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_beta_dimension_mismatch(small_model):
    with pytest.raises(InvalidInput):
        features.project_beta(np.zeros((5, 9)), small_model.basis)


def test_residual_cases(small_model):
    m0 = small_model.m0
    assert np.all(features.residual(m0, m0) == 0)
    a = np.random.default_rng(3).standard_normal((6, 9))
    assert np.allclose(features.residual(m0 + a, m0), a)


def test_residual_elementwise_oracle():
    rng = np.random.default_rng(4)
    x, m = rng.standard_normal((2, 3, 4))
    r = features.residual(x, m)
    for i in range(3):
        for j in range(4):
            assert r[i, j] == x[i, j] - m[i, j]


def test_gamma_zero_residual():
    assert np.allclose(features.project_gamma(np.zeros((4, 5)), 2), 0.0)


def test_gamma_single_entry():
    resid = np.zeros((4, 5))
    resid[0, 0] = 7.0
    assert abs(features.project_gamma(resid, 1)[0] - 7.0) < 1e-12


def test_gamma_matches_full_svd_oracle():
    rng = np.random.default_rng(5)
    resid = rng.standard_normal((6, 9))
    gamma = features.project_gamma(resid, 3)
    oracle = np.linalg.svd(resid, compute_uv=False)[:3]
    assert np.max(np.abs(gamma - oracle)) < 1e-10


def test_gamma_rotation_invariance():
    rng = np.random.default_rng(6)
    resid = rng.standard_normal((5, 7))
    q1, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    q2, _ = np.linalg.qr(rng.standard_normal((7, 7)))
    g1 = features.project_gamma(resid, 3)
    g2 = features.project_gamma(q1 @ resid @ q2, 3)
    assert np.max(np.abs(g1 - g2)) < 1e-8


def test_feature_vector_at_mean(small_model):
    y = features.feature_vector(small_model.m0, small_model)
    assert np.max(np.abs(y.beta - small_model.basis.lam)) < 1e-10
    assert np.max(np.abs(y.gamma)) < 1e-10


def test_feature_vector_orthogonal_shift(small_model):
    # shift built from directions orthogonal to the basis: beta unchanged,
    # gamma picks up the shift's singular value
    rng = np.random.default_rng(7)
    b = small_model.basis
    pu = np.eye(6) - b.u @ b.u.T
    pv = np.eye(9) - b.v @ b.v.T
    ut = pu @ rng.standard_normal(6)
    vt = pv @ rng.standard_normal(9)
    ut /= np.linalg.norm(ut)
    vt /= np.linalg.norm(vt)
    a = 3.0 * np.outer(ut, vt)
    y = features.feature_vector(small_model.m0 + a, small_model)
    assert np.max(np.abs(y.beta - b.lam)) < 1e-10
    oracle = np.linalg.svd(a, compute_uv=False)[: b.r]
    assert np.max(np.abs(y.gamma - oracle)) < 1e-8


def test_feature_vector_golden_fixture(small_model):
    rng = np.random.default_rng(8)
    x = small_model.m0 + 0.1 * rng.standard_normal((6, 9))
    y = features.feature_vector(x, small_model)
    b = small_model.basis
    beta_oracle = np.einsum("ji,jk,ki->i", b.u, x, b.v)
    gamma_oracle = np.linalg.svd(x - small_model.m0, compute_uv=False)[: b.r]
    assert np.allclose(y.as_array(), np.concatenate([beta_oracle, gamma_oracle]))


def test_t_statistic_zero_at_mean():
    mu = np.array([1.0, 2.0])
    y = features.FeatureVector(beta=np.array([1.0]), gamma=np.array([2.0]))
    assert features.t_statistic(y, mu, np.eye(2)) == 0.0


def test_t_statistic_identity_cov():
    y = features.FeatureVector(beta=np.array([3.0]), gamma=np.array([4.0]))
    assert abs(features.t_statistic(y, np.zeros(2), np.eye(2)) - 25.0) < 1e-12


def test_t_statistic_matches_explicit_inverse():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((4, 4))
    cov = a.T @ a + np.eye(4)
    chol = linalg.cholesky_spd(cov)
    yv = rng.standard_normal(4)
    mu = rng.standard_normal(4)
    t = features.t_statistic(yv, mu, chol)
    oracle = (yv - mu) @ np.linalg.inv(cov) @ (yv - mu)
    assert abs(t - oracle) < 1e-8 * max(1.0, oracle)
    assert t >= 0.0


def test_t_statistic_dimension_mismatch():
    with pytest.raises(InvalidInput):
        features.t_statistic(np.zeros(3), np.zeros(2), np.eye(2))


def test_basis_rejects_nonorthonormal():
    with pytest.raises(InvalidInput):
        features.ProjectionBasis(
            lam=np.array([1.0]), u=np.ones((3, 1)), v=np.ones((4, 1)) / 2.0
        )


def test_empirical_beta_shift():
    # mean beta shift under noise matches the bilinear projections of the shift
    rng = np.random.default_rng(10)
    model = calibration.build_model(
        np.outer([1.0, 1.0, 0.0, 0.0], [1.0, -1.0, 1.0, -1.0, 0.0]), q=0.99
    )
    b = model.basis
    a = rng.standard_normal((4, 5))
    predicted = np.einsum("ji,jk,ki->i", b.u, a, b.v)
    n = 2000
    betas = np.array(
        [
            features.project_beta(
                model.m0 + a + rng.standard_normal((4, 5)), b
            )
            for _ in range(n)
        ]
    )
    se = betas.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(betas.mean(axis=0) - b.lam - predicted) < 4 * se + 1e-12)
