import numpy as np
import pytest

from qrpath import Dataset, FitConfig, check_loss, kkt_residual, objective
from qrpath.oracle import (BRUTE_FORCE_CAP, OracleConfig, brute_force_loo, oracle_solve,
                           oracle_solve_weighted)
from qrpath import ValidationError

from conftest import random_data


def cvx_fit(data, tau, lam, w):
    cp = pytest.importorskip("cvxpy")
    b0, b = cp.Variable(), cp.Variable(data.p)
    r = data.y - b0 - data.X @ b
    loss = cp.sum(cp.multiply(w, 0.5 * cp.abs(r) + (tau - 0.5) * r))
    cp.Problem(cp.Minimize(loss + lam / 2 * cp.sum_squares(b))).solve(
        solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(b0.value), np.asarray(b.value)


@pytest.mark.parametrize("seed,tau,lam", [(0, 0.5, 1.0), (1, 0.1, 0.05), (2, 0.9, 20.0),
                                          (3, 0.3, 1.0)])
def test_matches_independent_qp_solver(seed, tau, lam):
    data = random_data(seed, 18, 4)
    sol = oracle_solve(data, FitConfig(tau, lam))
    _, b = cvx_fit(data, tau, lam, np.ones(data.n))
    assert np.max(np.abs(sol.beta - b)) < 1e-6
    # intercepts can differ on a flat optimum; objective values cannot
    cfg = FitConfig(tau, lam)
    b0c, _ = cvx_fit(data, tau, lam, np.ones(data.n))
    assert objective(data, cfg, 1, None, sol.beta0, sol.beta) <= \
        objective(data, cfg, 1, None, b0c, b) + 1e-8


def test_self_certifying():
    data = random_data(5, 10, 3)
    cfg = FitConfig(0.35, 0.7)
    for omega, i in [(1.0, None), (0.4, 2), (0.0, 7)]:
        sol = oracle_solve(data, cfg, omega, i)
        assert kkt_residual(sol, data, cfg) <= 1e-10 * data.scale


def test_penalty_dominated_limit():
    data = random_data(6, 21, 3)
    sol = oracle_solve(data, FitConfig(0.3, 1e9))
    assert np.max(np.abs(sol.beta)) < 1e-6
    assert sol.beta0 == pytest.approx(np.sort(data.y)[6], abs=1e-6)  # ceil(21 * 0.3) = 7th


def test_zero_weight_equals_removal():
    data = random_data(7, 12, 3)
    cfg = FitConfig(0.6, 1.0)
    a = oracle_solve(data, cfg, 0.0, 4)
    b = oracle_solve(data.drop(4), cfg)
    assert np.max(np.abs(a.beta - b.beta)) < 1e-8
    # the held-out intercept may differ only inside a flat optimum
    cfgd = FitConfig(0.6, 1.0)
    assert objective(data.drop(4), cfgd, 1, None, a.beta0, a.beta) == pytest.approx(
        objective(data.drop(4), cfgd, 1, None, b.beta0, b.beta), abs=1e-8)


def test_weighted_oracle_matches_qp_solver():
    data = random_data(8, 14, 2)
    w = np.random.default_rng(0).uniform(0.1, 2.0, data.n)
    cfg = FitConfig(0.4, 0.8)
    sol = oracle_solve_weighted(data, cfg, w)
    assert kkt_residual(sol, data, cfg, weights=w) <= 1e-10 * data.scale
    _, b = cvx_fit(data, 0.4, 0.8, w)
    assert np.max(np.abs(sol.beta - b)) < 1e-6
    with pytest.raises(ValidationError):
        oracle_solve_weighted(data, cfg, -w)


def test_five_point_hand_solution(five_point):
    spec, data = five_point
    cfg = FitConfig(spec["tau"], spec["lam"])
    full = oracle_solve(data, cfg)
    assert full.beta[0] == pytest.approx(spec["full"]["beta"], abs=1e-12)
    assert full.beta0 == pytest.approx(spec["full"]["beta0"], abs=1e-12)
    assert np.allclose(full.theta, spec["full"]["theta"], atol=1e-12)
    assert list(full.partition.elbow) == spec["full"]["elbow"]
    loo = brute_force_loo(data, cfg.tau, cfg.lam)
    assert loo[0] == pytest.approx(spec["loo_case0"]["prediction"], abs=1e-12)
    # remaining cases by the same sample-quantile identities
    x, y = data.X[:, 0], data.y
    for i in range(1, 5):
        keep = [j for j in range(5) if j != i]
        order = sorted(keep, key=lambda j: y[j])
        e, lft, rgt = order[1], order[:1], order[2:]
        th = {j: -0.7 for j in lft} | {j: 0.3 for j in rgt}
        th[e] = -sum(th.values())
        beta = sum(th[j] * x[j] for j in keep) / cfg.lam
        assert loo[i] == pytest.approx(y[e] - x[e] * beta + x[i] * beta, abs=1e-12)


def test_duplicate_case_loo_equals_full_fit():
    # duplicating an elbow case adds a copy with zero dual, so the fit stays put and
    # deleting either copy gives back the original data
    base = random_data(9, 11, 2)
    cfg = FitConfig(0.5, 1.0)
    k = oracle_solve(base, cfg).partition.elbow[0]
    data = Dataset(np.vstack([base.X, base.X[k]]), np.append(base.y, base.y[k]))
    full = oracle_solve(data, cfg)
    loo = brute_force_loo(data, 0.5, 1.0)
    fitted = full.beta0 + data.X @ full.beta
    assert loo[k] == pytest.approx(fitted[k], abs=1e-8)
    assert loo[-1] == pytest.approx(fitted[-1], abs=1e-8)


def test_brute_force_cap():
    big = random_data(0, BRUTE_FORCE_CAP + 1, 1)
    with pytest.raises(ValidationError):
        brute_force_loo(big, 0.5, 1.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        OracleConfig(kkt_tol=1e-15)
    with pytest.raises(ValidationError):
        OracleConfig(smoothing_decay=1.5)
