"""Case-influence graphs and case-weight degrees of freedom.

Quantile-regression influence comes from accumulating the residual slopes of
a case-weight path; ridge influence and weighted fits are closed form through
the hat matrix ``H = Xt (Xt'Xt + lam I~)^{-1} Xt'`` with an unpenalised
intercept.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .core import Dataset, FitConfig, validate_istar, validate_omega
from .exceptions import QRPathError, ValidationError
from .omega_path import OmegaPath, build_omega_path, eval_at

DF_DENOM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class InfluenceGraph:
    """Piecewise-quadratic distance ``D(omega)`` for one case.

    ``knots`` run from 1 down to 0. On ``(knots[m+1], knots[m]]`` the change in
    fitted values is ``offsets[m] + (omega - knots[m]) * slope_table[m]``.
    """

    case: int
    knots: np.ndarray
    values: np.ndarray
    slope_table: np.ndarray
    offsets: np.ndarray
    factor: float

    def __call__(self, omega):
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        if np.any((w < 0) | (w > 1)):
            raise ValidationError("omega must lie in [0, 1]")
        # segment m covers (knots[m+1], knots[m]]
        m = np.searchsorted(-self.knots, -w, side="left") - 1
        m = np.clip(m, 0, len(self.slope_table) - 1)
        diff = self.offsets[m] + (w - self.knots[m])[:, None] * self.slope_table[m]
        out = self.factor * np.einsum("ij,ij->i", diff, diff)
        out[w == 1.0] = 0.0
        return out if np.ndim(omega) else float(out[0])


def _influence_factor(n, p, sigma2):
    if sigma2 is None:
        return 1.0 / n
    if not sigma2 > 0:
        raise ValidationError("sigma2 must be positive")
    return 1.0 / (p * sigma2)


def influence_graph_qr(path: OmegaPath, data: Dataset, cfg: FitConfig,
                       sigma2: Optional[float] = None) -> InfluenceGraph:
    """Influence graph from a stored case-weight path.

    Scaled by ``1/n`` by default, or by ``1/(p sigma2)`` when ``sigma2`` is given.
    """
    if path.terminal is None or not path.segments:
        raise ValidationError("influence graphs need a complete path built with store=True")
    lam = cfg.lam
    segs = path.segments
    knots = np.array([s.omega_hi for s in segs] + [segs[-1].omega_lo])
    if knots[-1] != 0.0:
        raise QRPathError("case-weight path does not reach omega = 0")
    slopes = np.array([s.h / lam for s in segs])
    offsets = np.zeros_like(slopes)
    r1 = path.initial.residuals
    jumps = set(path.jumps)
    for m in range(1, len(segs)):
        acc = offsets[m - 1] + (knots[m] - knots[m - 1]) * slopes[m - 1]
        if knots[m] in jumps:
            # the intercept was re-anchored inside a flat optimum; carry the shift
            acc = segs[m].anchor.residuals - r1
        offsets[m] = acc
    # fitted-value change equals minus the residual change; the sign drops in the square
    factor = _influence_factor(data.n, data.p, sigma2)
    end = offsets[-1] + (0.0 - knots[-2]) * slopes[-1]
    vals = factor * np.concatenate([np.einsum("ij,ij->i", offsets, offsets), [end @ end]])
    vals[0] = 0.0
    return InfluenceGraph(path.istar, knots, vals, slopes, offsets, factor)


def influence_from_residuals(path: OmegaPath, data: Dataset, omegas,
                             sigma2: Optional[float] = None) -> np.ndarray:
    """Same distance from ``eval_at`` residuals directly (reference computation)."""
    f = _influence_factor(data.n, data.p, sigma2)
    fit1 = path.initial.predict(data.X)
    out = []
    for w in np.atleast_1d(omegas):
        d = fit1 - eval_at(path, float(w)).predict(data.X)
        out.append(f * float(d @ d))
    return np.array(out)


@lru_cache(maxsize=16)
def _ridge_system(xbytes: bytes, shape: tuple, lam: float):
    X = np.frombuffer(xbytes, dtype=float).reshape(shape)
    Xt = np.column_stack([np.ones(shape[0]), X])
    D = Xt.T @ Xt
    D[np.diag_indices(shape[1] + 1)] += np.r_[0.0, np.full(shape[1], lam)]
    if np.linalg.cond(D) > 1e12:
        raise ValidationError("ridge system is singular; use lambda > 0 or a full-rank design")
    Dinv = np.linalg.inv(D)
    H = Xt @ Dinv @ Xt.T
    Dinv.setflags(write=False)
    H.setflags(write=False)
    return Dinv, H


def ridge_hat(data: Dataset, lam: float):
    """``(D^{-1}, H)`` for ``D = Xt'Xt + lam I~``; cached per design and penalty.

    ``lam = 0`` is accepted when the augmented design has full column rank.
    """
    lam = float(lam)
    if not (np.isfinite(lam) and lam >= 0):
        raise ValidationError("lambda must be a nonnegative finite number")
    X = np.ascontiguousarray(data.X)
    return _ridge_system(X.tobytes(), X.shape, lam)


def ridge_fit(data: Dataset, lam: float) -> np.ndarray:
    """Full-data ridge coefficients ``(beta0, beta...)``."""
    Dinv, _ = ridge_hat(data, lam)
    return Dinv @ (data.Xtilde.T @ data.y)


def ridge_weighted_fit(data: Dataset, lam: float, istar: int, omega: float,
                       method: str = "normal"):
    """Minimiser of the squared-loss objective with case ``istar`` weighted by ``omega``.

    ``method="normal"`` solves the weighted normal equations directly;
    ``method="hat"`` updates the full fit by the rank-one hat-matrix identity.
    Returns ``(beta0, beta)``.
    """
    istar = validate_istar(istar, data.n)
    omega = validate_omega(omega)
    Xt = data.Xtilde
    if method == "normal":
        lam = float(lam)
        if not (np.isfinite(lam) and lam >= 0):
            raise ValidationError("lambda must be a nonnegative finite number")
        w = np.ones(data.n)
        w[istar] = omega
        A = (Xt.T * w) @ Xt
        A[np.diag_indices(data.p + 1)] += np.r_[0.0, np.full(data.p, lam)]
        try:
            c = np.linalg.solve(A, Xt.T @ (w * data.y))
        except np.linalg.LinAlgError as exc:
            raise QRPathError(f"weighted ridge system is singular: {exc}") from exc
    elif method == "hat":
        Dinv, H = ridge_hat(data, lam)
        c = Dinv @ (Xt.T @ data.y)
        if omega < 1.0:
            r = data.y[istar] - Xt[istar] @ c
            denom = 1.0 / (1.0 - omega) - H[istar, istar]
            if denom <= 0:
                raise QRPathError("case has unit leverage; the weighted fit is undefined")
            c = c - Dinv @ Xt[istar] * (r / denom)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return float(c[0]), c[1:]


@dataclass(frozen=True)
class RidgeInfluence:
    """Closed-form ridge distance ``r^2 sum_j h_j^2 / (c {1/(1-w) - h_ii}^2)``."""

    case: int
    residual: float
    leverage: float
    column_norm2: float  # sum_j h_{j,i}^2
    factor: float

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        if np.any((w < 0) | (w > 1)):
            raise ValidationError("omega must lie in [0, 1]")
        with np.errstate(divide="ignore"):
            g = 1.0 / (1.0 - w)
        out = np.where(w >= 1.0, 0.0,
                       self.factor * self.residual ** 2 * self.column_norm2
                       / (g - self.leverage) ** 2)
        return float(out) if out.ndim == 0 else out


def influence_graph_ridge(data: Dataset, lam: float, istar: int,
                          sigma2: Optional[float] = None) -> RidgeInfluence:
    """Ridge influence curve for case ``istar`` (``1/n`` scaling unless ``sigma2`` given)."""
    istar = validate_istar(istar, data.n)
    _, H = ridge_hat(data, lam)
    r = data.y - H @ data.y
    col = H[:, istar]
    return RidgeInfluence(istar, float(r[istar]), float(H[istar, istar]), float(col @ col),
                          _influence_factor(data.n, data.p, sigma2))


@dataclass(frozen=True, eq=False)
class DfEstimate:
    omega: float
    value: float
    per_case: np.ndarray  # NaN where the summand is excluded
    excluded: int


def df_estimate(y, fitted, fitted_weighted, omega: float, scale: Optional[float] = None
                ) -> DfEstimate:
    """``sum_i (f(x_i) - f_w^i(x_i)) / ((1 - w)(y_i - f_w^i(x_i)))``.

    ``fitted_weighted[i]`` is the fit at ``x_i`` with case ``i`` weighted by
    ``omega``. Summands whose denominator residual is below ``1e-12 * scale``
    are excluded and counted.
    """
    omega = validate_omega(omega)
    if omega >= 1.0:
        raise ValidationError("omega must lie in [0, 1)")
    y = np.asarray(y, dtype=float)
    f = np.asarray(fitted, dtype=float)
    fw = np.asarray(fitted_weighted, dtype=float)
    if not (y.shape == f.shape == fw.shape) or y.ndim != 1:
        raise ValidationError("y, fitted and fitted_weighted must be equal-length vectors")
    if scale is None:
        scale = max(1.0, float(np.max(np.abs(y))))
    res = y - fw
    bad = np.abs(res) < DF_DENOM_TOL * scale
    per = np.full(y.shape, np.nan)
    per[~bad] = (f[~bad] - fw[~bad]) / ((1.0 - omega) * res[~bad])
    return DfEstimate(omega, float(np.sum(per[~bad])), per, int(bad.sum()))


def df_ridge(data: Dataset, lam: float, omega: float) -> DfEstimate:
    c = ridge_fit(data, lam)
    fitted = data.Xtilde @ c
    fw = np.empty(data.n)
    for i in range(data.n):
        b0, b = ridge_weighted_fit(data, lam, i, omega, method="hat")
        fw[i] = b0 + data.X[i] @ b
    return df_estimate(data.y, fitted, fw, omega, data.scale)


def df_qr(data: Dataset, tau: float, lam: float, omega: float = 0.9, full=None) -> DfEstimate:
    """Case-weight degrees of freedom of the penalised quantile fit (default ``omega = 0.9``)."""
    from .lambda_path import full_fit_at

    omega = validate_omega(omega)
    cfg = FitConfig(tau, lam)
    if full is None:
        full = full_fit_at(data, tau, lam)
    fitted = full.beta0 + data.X @ full.beta
    fw = np.empty(data.n)
    for i in range(data.n):
        path = build_omega_path(data, cfg, i, full, store=omega > 0.0)
        s = path.terminal if omega == 0.0 else eval_at(path, omega)
        fw[i] = s.beta0 + data.X[i] @ s.beta
    return df_estimate(data.y, fitted, fw, omega, data.scale)
