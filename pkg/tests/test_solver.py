import numpy as np
import pytest

from tunevar import (
    Dataset,
    DomainEscape,
    ModelSpec,
    NoConvergence,
    RidgeLinearModel,
    SingularJacobian,
    ridge_closed_form,
    solve_loo,
    solve_theta,
    theta_prime,
)
from tunevar.model import phi_mean

from conftest import make_linear_data, rel_err


def test_lambda_zero_equals_ols():
    data = make_linear_data(n=150, seed=1)
    spec = RidgeLinearModel(2).spec()
    res = solve_theta(spec, data, [0.0], np.zeros(3))
    X = np.column_stack([np.ones(data.n), data.rows[:, 1:]])
    ols = np.linalg.solve(X.T @ X, X.T @ data.rows[:, 0])
    assert np.allclose(res.theta_hat, ols, atol=1e-10)


def test_ridge_closed_form_agreement_random_lambdas():
    data = make_linear_data(n=120, seed=2)
    spec = RidgeLinearModel(2).spec()
    rng = np.random.default_rng(3)
    for lam in rng.uniform(0.0, 2.0, size=20):
        res = solve_theta(spec, data, [lam], np.zeros(3))
        assert rel_err(res.theta_hat, ridge_closed_form(data, lam)) < 1e-9


def test_residual_recomputation_matches():
    data = make_linear_data(n=80, seed=4)
    spec = RidgeLinearModel(2).spec()
    res = solve_theta(spec, data, [0.5], np.zeros(3))
    recomputed = float(np.linalg.norm(phi_mean(spec, data.rows, res.theta_hat, res.lam)))
    assert recomputed == res.residual_norm
    assert res.residual_norm <= 1e-10 * (1.0 + 0.0) + 1e-10


def test_permutation_invariance():
    data = make_linear_data(n=90, seed=5)
    spec = RidgeLinearModel(2).spec()
    res1 = solve_theta(spec, data, [0.3], np.zeros(3))
    perm = np.random.default_rng(6).permutation(data.n)
    res2 = solve_theta(spec, data.take(perm), [0.3], np.zeros(3))
    assert np.allclose(res1.theta_hat, res2.theta_hat, atol=1e-10)


def test_theta_prime_matches_ridge_derivative():
    data = make_linear_data(n=100, seed=7)
    spec = RidgeLinearModel(2).spec()
    res = solve_theta(spec, data, [0.4], np.zeros(3))
    D = theta_prime(spec, data, res)
    X = np.column_stack([np.ones(data.n), data.rows[:, 1:]])
    P = np.diag([0.0, 1.0, 1.0])
    expected = -np.linalg.solve(X.T @ X / data.n + 0.4 * P, P @ res.theta_hat)
    assert rel_err(D.ravel(), expected) < 1e-8


def test_theta_prime_zero_when_lambda_free():
    data = make_linear_data(n=50, seed=8)

    def phi(z, th, lm):
        x = np.concatenate([[1.0], z[1:]])
        return -2.0 * x * (z[0] - th @ x)

    spec = ModelSpec(p=3, q=1, d=3, phi=phi)
    res = solve_theta(spec, data, [0.7], np.zeros(3))
    assert np.allclose(theta_prime(spec, data, res), 0.0, atol=1e-8)


def test_theta_prime_second_order_halving():
    # || theta(l+h) - theta(l) - h D || should shrink ~4x when h halves
    data = make_linear_data(n=100, seed=9)
    spec = RidgeLinearModel(2).spec()
    lam = 0.3
    res = solve_theta(spec, data, [lam], np.zeros(3))
    D = theta_prime(spec, data, res).ravel()

    def defect(h):
        pert = solve_theta(spec, data, [lam + h], res.theta_hat)
        return np.linalg.norm(pert.theta_hat - res.theta_hat - h * D)

    ratio = defect(1e-3) / defect(5e-4)
    assert 3.5 <= ratio <= 4.5


def test_solve_loo_residual_and_warm_start():
    data = make_linear_data(n=40, seed=10)
    spec = RidgeLinearModel(2).spec()
    res = solve_theta(spec, data, [0.2], np.zeros(3))
    for i in [0, 17, 39]:
        loo = solve_loo(spec, data, [0.2], i, warm_start=res.theta_hat)
        Z = np.delete(data.rows, i, axis=0)
        assert np.linalg.norm(phi_mean(spec, Z, loo.theta_hat, loo.lam)) <= 1e-9
    with pytest.raises(IndexError):
        solve_loo(spec, data, [0.2], data.n, warm_start=res.theta_hat)
    tiny = Dataset(data.rows[:2], response_col=0)
    with pytest.raises(ValueError):
        solve_loo(spec, tiny, [0.2], 0, warm_start=res.theta_hat)


def test_loo_gap_shrinks_with_n():
    spec = RidgeLinearModel(2).spec()
    max_gaps = {}
    for n in (200, 400):
        gaps = []
        for seed in range(10):
            data = make_linear_data(n=n, seed=100 + seed)
            res = solve_theta(spec, data, [0.3], np.zeros(3))
            g = 0.0
            for i in range(0, n, max(1, n // 25)):
                loo = solve_loo(spec, data, [0.3], i, warm_start=res.theta_hat)
                g = max(g, np.linalg.norm(loo.theta_hat - res.theta_hat))
            gaps.append(g)
        max_gaps[n] = np.mean(gaps)
    assert max_gaps[400] < 0.75 * max_gaps[200]


def test_singular_jacobian_raises():
    rows = np.column_stack([np.arange(10.0), np.ones(10), np.ones(10)])
    data = Dataset(rows, response_col=0)  # duplicate covariate columns
    spec = RidgeLinearModel(2).spec()
    with pytest.raises(SingularJacobian):
        solve_theta(spec, data, [0.0], np.zeros(3))


def test_no_convergence_raises():
    # phi has no root: phi = 1 + th^2
    spec = ModelSpec(p=1, q=1, d=1, phi=lambda z, th, lm: 1.0 + th**2)
    data = Dataset(np.zeros((5, 1)) + np.arange(5.0)[:, None])
    with pytest.raises(NoConvergence):
        solve_theta(spec, data, [0.0], np.array([0.5]))


def test_domain_escape_raises():
    # root at th = 3 but the box stops at 1, and projection cannot reduce
    spec = ModelSpec(
        p=1, q=1, d=1,
        phi=lambda z, th, lm: th - 3.0,
        theta_domain=np.array([[-1.0, 1.0]]),
    )
    data = Dataset(np.arange(4.0)[:, None])
    with pytest.raises((DomainEscape, NoConvergence)):
        solve_theta(spec, data, [0.0], np.array([0.0]))
