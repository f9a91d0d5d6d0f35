"""Reference solver used by tests and by degenerate-event recovery.

The solver never touches the path code. It minimises a Huber-smoothed check
loss by damped Newton steps while shrinking the smoothing width, reads the
active set off the smoothed solution, and polishes it by solving the exact
elbow KKT system, correcting the active set until every condition holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (ELBOW, LEFT, MEMBERSHIP_TOL, RIGHT, Dataset, FitConfig, Partition,
                   QuantileSolution, case_weights, dual_bounds, kkt_residual,
                   validate_istar, validate_omega)
from .exceptions import OracleFailure, ValidationError

BRUTE_FORCE_CAP = 200


@dataclass(frozen=True)
class OracleConfig:
    max_iter: int = 400
    kkt_tol: float = 1e-10
    smoothing_start: float = 1e-1
    smoothing_decay: float = 0.2
    smoothing_floor: float = 1e-10

    def __post_init__(self):
        if self.kkt_tol < 1e-12:
            raise ValidationError("kkt_tol must be at least 1e-12")
        if not (0.0 < self.smoothing_decay < 1.0):
            raise ValidationError("smoothing_decay must lie in (0, 1)")


def _smoothed(r, w, tau, delta):
    """Value, derivative and curvature of the smoothed weighted check loss."""
    pos = r >= 0
    slope = np.where(pos, tau, 1.0 - tau)
    inside = np.abs(r) <= delta
    val = np.where(inside, slope * r * r / (2 * delta), slope * (np.abs(r) - delta / 2))
    d1 = np.where(pos, tau * np.minimum(r / delta, 1.0), (1.0 - tau) * np.maximum(r / delta, -1.0))
    d2 = np.where(inside, slope / delta, 0.0)
    return w * val, w * d1, w * d2


def _newton(Xt, y, w, tau, lam, delta, coef, max_iter):
    pen = np.full(Xt.shape[1], lam)
    pen[0] = 0.0

    def F(c):
        r = y - Xt @ c
        return _smoothed(r, w, tau, delta)[0].sum() + 0.5 * lam * c[1:] @ c[1:]

    f = F(coef)
    gscale = np.sum(w) * (1.0 + np.max(np.abs(y)))
    used = 0
    mu = 1e-12
    for used in range(1, max_iter + 1):
        r = y - Xt @ coef
        _, d1, d2 = _smoothed(r, w, tau, delta)
        grad = -Xt.T @ d1 + pen * coef
        if np.max(np.abs(grad)) <= 1e-13 * gscale:
            break
        H = (Xt.T * d2) @ Xt + np.diag(pen)
        ref = np.trace(H) / H.shape[0] + 1.0
        while True:
            # Levenberg damping: grows until the step gives sufficient decrease
            Hd = H + mu * ref * np.eye(H.shape[0])
            step = -np.linalg.solve(Hd, grad)
            cand = coef + step
            fc = F(cand)
            if fc <= f + 1e-4 * (grad @ step) or mu > 1e12:
                break
            mu *= 100.0
        if fc > f or f - fc <= 1e-15 * abs(f):
            if fc <= f:
                coef = cand
            break
        mu = max(mu / 10.0, 1e-12)
        done = np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(np.abs(coef)))
        coef, f = cand, fc
        if done:
            break
    return coef, used


def _solve_elbow_system(data, lam, status, theta):
    """Exact KKT solve for (beta0, beta, theta_E) with L/R duals held fixed."""
    X, y = data.X, data.y
    p = data.p
    E = np.flatnonzero(status == ELBOW)
    O = np.flatnonzero(status != ELBOW)
    e = E.size
    k = 1 + p + e
    A = np.zeros((k, k))
    rhs = np.zeros(k)
    A[0, 1 + p:] = 1.0
    rhs[0] = -theta[O].sum()
    A[1:1 + p, 1:1 + p] = lam * np.eye(p)
    A[1:1 + p, 1 + p:] = -X[E].T
    rhs[1:1 + p] = X[O].T @ theta[O]
    A[1 + p:, 0] = 1.0
    A[1 + p:, 1:1 + p] = X[E]
    rhs[1 + p:] = y[E]
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    th = theta.copy()
    th[E] = sol[1 + p:]
    return sol[0], sol[1:1 + p], th


def intercept_interval(data: Dataset, tau: float, beta, omega: float = 1.0,
                       istar: Optional[int] = None):
    """Optimal intercept set ``[lo, hi]`` for fixed slopes ``beta``.

    The slope vector of the problem is unique (the ridge term is strictly
    convex in it), but the intercept is not when some cumulative case weight
    equals ``tau`` times the total weight; then ``lo < hi``.
    """
    w = case_weights(data.n, omega, istar)
    return _interval(data.y - data.X @ np.asarray(beta, dtype=float), w, tau)


def _interval(z, w, tau):
    keep = w > 0
    z, w = z[keep], w[keep]
    order = np.argsort(z, kind="stable")
    z, w = z[order], w[order]
    target = tau * w.sum()
    cum = np.cumsum(w)
    tol = 1e-9 * w.sum()
    hit = np.flatnonzero(np.abs(cum - target) <= tol)
    if hit.size and hit[0] + 1 < z.size:
        k = hit[0]
        return float(z[k]), float(z[k + 1])
    k = int(np.searchsorted(cum, target - tol))
    return float(z[k]), float(z[k])


def _polish(data, cfg, w, status, max_rounds):
    n = data.n
    lo, hi = w * (cfg.tau - 1.0), w * cfg.tau
    tol_r = MEMBERSHIP_TOL * data.scale
    status = status.copy()
    seen = set()
    for _ in range(max_rounds):
        theta = np.where(status == LEFT, lo, np.where(status == RIGHT, hi, 0.0))
        if not np.any(status == ELBOW):
            beta = data.X.T @ theta / cfg.lam
            a, b = _interval(data.y - data.X @ beta, w, cfg.tau)
            beta0 = 0.5 * (a + b)
        else:
            beta0, beta, theta = _solve_elbow_system(data, cfg.lam, status, theta)
        r = data.y - beta0 - data.X @ beta
        E = status == ELBOW
        bad_lo = E & (theta < lo - 1e-12)
        bad_hi = E & (theta > hi + 1e-12)
        bad_L = (status == LEFT) & (r > tol_r)
        bad_R = (status == RIGHT) & (r < -tol_r)
        zero_LR = (status != ELBOW) & (np.abs(r) <= tol_r) & (w > 0)
        if not (bad_lo.any() or bad_hi.any() or bad_L.any() or bad_R.any()):
            status[zero_LR & ~E] = ELBOW
            theta_fixed = theta.copy()
            return beta0, beta, theta_fixed, status
        key = status.tobytes()
        if key in seen:
            # cycling: move only the worst offender
            scores = np.zeros(n)
            scores[bad_lo] = (lo - theta)[bad_lo]
            scores[bad_hi] = (theta - hi)[bad_hi]
            scores[bad_L | bad_R] = np.abs(r[bad_L | bad_R])
            j = int(np.argmax(scores))
            mask = np.zeros(n, dtype=bool)
            mask[j] = True
            bad_lo, bad_hi, bad_L, bad_R = bad_lo & mask, bad_hi & mask, bad_L & mask, bad_R & mask
        seen.add(key)
        status[bad_lo] = LEFT
        status[bad_hi] = RIGHT
        status[bad_L | bad_R] = ELBOW
    return None


def _solve(data, cfg, w, config, finish):
    Xt, y = data.Xtilde, data.y
    tol = config.kkt_tol * data.scale
    coef = np.zeros(data.p + 1)
    coef[0] = _weighted_quantile(y, w, cfg.tau)
    delta = config.smoothing_start * data.scale
    floor = config.smoothing_floor * data.scale
    iters = 0
    best = np.inf
    while iters < config.max_iter:
        coef, used = _newton(Xt, y, w, cfg.tau, cfg.lam, delta, coef, config.max_iter - iters)
        iters += used
        if delta <= 1e-2 * data.scale or delta <= floor:
            r = y - Xt @ coef
            status = np.sign(r).astype(np.int8)
            status[np.abs(r) <= delta] = ELBOW
            polished = _polish(data, cfg, w, status, max_rounds=4 * data.n + 10)
            if polished is not None:
                sol, res = finish(*polished)
                best = min(best, res)
                if res <= tol:
                    return sol
        if delta <= floor:
            break
        delta = max(delta * config.smoothing_decay, floor)
    raise OracleFailure(
        f"oracle did not reach KKT tolerance {tol:.3g} (best {best:.3g}) "
        f"after {iters} Newton iterations")


def _weighted_quantile(z, w, tau):
    return _interval(z, w, tau)[0]


def oracle_solve(data: Dataset, cfg: FitConfig, omega: float = 1.0,
                 istar: Optional[int] = None, config: OracleConfig = OracleConfig()
                 ) -> QuantileSolution:
    """Solve the case-weight adjusted problem to a KKT certificate of ``kkt_tol * scale``.

    When the intercept is not unique and ``omega == 0`` the returned intercept is
    the limit of the unique solutions as the weight decreases to zero, i.e. the
    point of the optimal intercept interval closest to the held-out case.
    """
    omega = validate_omega(omega)
    if omega < 1.0:
        istar = validate_istar(istar, data.n)
    elif istar is not None:
        istar = validate_istar(istar, data.n)
    w = case_weights(data.n, omega, istar)

    def finish(beta0, beta, theta, status):
        sol = _finish(data, cfg, omega, istar, beta0, beta, theta, status)
        return sol, kkt_residual(sol, data, cfg)

    return _solve(data, cfg, w, config, finish)


def oracle_solve_weighted(data: Dataset, cfg: FitConfig, weights,
                          config: OracleConfig = OracleConfig()) -> QuantileSolution:
    """Minimise ``sum_i w_i rho(r_i) + lam/2 ||beta||^2`` for arbitrary ``w >= 0``.

    The returned solution's ``omega``/``starred`` fields are unused; certify it
    with ``kkt_residual(sol, data, cfg, weights=w)``.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n,) or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValidationError("weights must be a finite nonnegative vector with positive sum")

    def finish(beta0, beta, theta, status):
        r = data.y - beta0 - data.X @ beta
        st = np.sign(r).astype(np.int8)
        st[np.abs(r) <= MEMBERSHIP_TOL * data.scale] = ELBOW
        th = np.where(st == LEFT, w * (cfg.tau - 1), np.where(st == RIGHT, w * cfg.tau, theta))
        sol = QuantileSolution(beta0, beta, th, r, Partition.from_status(st))
        return sol, kkt_residual(sol, data, cfg, weights=w)

    return _solve(data, cfg, w, config, finish)


def _finish(data, cfg, omega, istar, beta0, beta, theta, status):
    if istar is not None and omega == 0.0:
        a, b = intercept_interval(data, cfg.tau, beta, omega, istar)
        if b > a:
            zi = data.y[istar] - data.X[istar] @ beta
            beta0 = min(max(zi, a), b)
    r = data.y - beta0 - data.X @ beta
    tol_r = MEMBERSHIP_TOL * data.scale
    status = np.sign(r).astype(np.int8)
    status[np.abs(r) <= tol_r] = ELBOW
    lo, hi = dual_bounds(data.n, cfg.tau, omega, istar)
    theta = np.where(status == LEFT, lo, np.where(status == RIGHT, hi, theta))
    return QuantileSolution(beta0, beta, theta, r, Partition.from_status(status), omega, istar)


def brute_force_loo(data: Dataset, tau: float, lam: float,
                    config: OracleConfig = OracleConfig()) -> np.ndarray:
    """Leave-one-out predictions ``f^{[-i]}(x_i)`` from ``n`` independent oracle fits."""
    if data.n > BRUTE_FORCE_CAP:
        raise ValidationError(f"brute-force LOO is capped at n <= {BRUTE_FORCE_CAP}")
    cfg = FitConfig(tau, lam)
    out = np.empty(data.n)
    for i in range(data.n):
        sol = oracle_solve(data, cfg, 0.0, i, config)
        out[i] = sol.beta0 + data.X[i] @ sol.beta
    return out
