"""Exact leave-one-out CV from case-weight paths, GACV, and flipped-case anatomy."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import ELBOW, MEMBERSHIP_TOL, Dataset, FitConfig, QuantileSolution, check_loss
from .exceptions import ValidationError
from .lambda_path import LambdaPath, build_lambda_path, full_fit_at
from .omega_path import build_omega_path
from .parallel import pmap

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LooResult:
    """Leave-one-out fits at one penalty value."""

    lam: float
    full: QuantileSolution
    predictions: np.ndarray  # f^{[-i]}(x_i)
    n_breakpoints: np.ndarray  # per-case count of weight breakpoints in (0, 1)
    max_elbow: int


@dataclass(frozen=True, eq=False)
class CvCurve:
    lambdas: np.ndarray  # descending
    rcv: np.ndarray
    gacv: np.ndarray  # NaN where every case sits in the elbow
    elbow_sizes: np.ndarray
    argmin_rcv: float
    argmin_gacv: float
    loo_predictions: np.ndarray  # (n_lambda, n)
    n_breakpoints: np.ndarray  # (n_lambda, n)

    @property
    def undefined_gacv(self) -> np.ndarray:
        return self.lambdas[np.isnan(self.gacv)]


@dataclass(frozen=True)
class FlipRecord:
    case: int
    r_full: float
    r_loo: float
    scenario: str
    approx_error: float
    in_elbow: bool


def loo_at(data: Dataset, tau: float, lam: float, full: Optional[QuantileSolution] = None,
           check: bool = True) -> LooResult:
    """All ``n`` leave-one-out fits at ``lam`` via case-weight paths from ``full``."""
    cfg = FitConfig(tau, lam)
    if full is None:
        full = full_fit_at(data, tau, lam)
    pred = np.empty(data.n)
    nbp = np.empty(data.n, dtype=int)
    emax = len(full.partition.elbow)
    for i in range(data.n):
        path = build_omega_path(data, cfg, i, full, check=check, store=False)
        t = path.terminal
        pred[i] = t.beta0 + data.X[i] @ t.beta
        nbp[i] = path.n_breakpoints
        emax = max(emax, path.max_elbow)
    return LooResult(lam, full, pred, nbp, emax)


def gacv_score(data: Dataset, tau: float, full: QuantileSolution) -> float:
    """Full-data check loss over ``n - |E|``; NaN when the elbow holds every case."""
    e = len(full.partition.elbow)
    if e >= data.n:
        return float("nan")
    r = data.y - full.beta0 - data.X @ full.beta
    return float(np.sum(check_loss(r, tau)) / (data.n - e))


def _argmin(lambdas, scores):
    if np.all(np.isnan(scores)):
        return float("nan")
    return float(lambdas[int(np.nanargmin(scores))])


def exact_loo_cv(data: Dataset, tau: float, lambdas, threads: Optional[int] = None,
                 path: Optional[LambdaPath] = None, check: bool = True) -> CvCurve:
    """Exact LOO CV (RCV) and GACV over a descending ``lambdas`` grid.

    Full-data fits are read off one penalty path; each grid point then needs
    ``n`` case-weight paths. Grid points are distributed over ``threads``
    workers and merged in grid order.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValidationError("lambdas must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(lambdas)) or np.any(lambdas <= 0):
        raise ValidationError("lambdas must be positive and finite")
    if np.any(np.diff(lambdas) >= 0):
        raise ValidationError("lambdas must be strictly descending")
    FitConfig(tau, lambdas[-1])
    if path is None:
        path = build_lambda_path(data, tau, float(lambdas[-1]), check=check)

    def one(lam):
        return loo_at(data, tau, lam, path.solution_at(lam), check=check)

    results = pmap(one, lambdas, threads)
    preds = np.array([r.predictions for r in results])
    rcv = np.array([np.mean(check_loss(data.y - p, tau)) for p in preds])
    gacv = np.array([gacv_score(data, tau, r.full) for r in results])
    for lam, g in zip(lambdas, gacv):
        if np.isnan(g):
            log.warning("GACV undefined at lambda=%g: every case is in the elbow", lam)
    return CvCurve(
        lambdas=lambdas, rcv=rcv, gacv=gacv,
        elbow_sizes=np.array([len(r.full.partition.elbow) for r in results]),
        argmin_rcv=_argmin(lambdas, rcv), argmin_gacv=_argmin(lambdas, gacv),
        loo_predictions=preds, n_breakpoints=np.array([r.n_breakpoints for r in results]))


def smoothed_check_derivative(r, tau: float, delta: float):
    """Derivative of ``(tau 1{r>0} + (1-tau) 1{r<0}) r^2 / delta`` inside ``(-delta, delta)``,
    and of the check loss outside it."""
    r = np.asarray(r, dtype=float)
    inner = np.where(r > 0, 2 * tau * r / delta, 2 * (1 - tau) * r / delta)
    outer = np.where(r > 0, tau, tau - 1.0)
    return np.where(np.abs(r) < delta, inner, outer)


def _scenario(r_loo, r, delta):
    if r_loo > 0:
        return "a" if r <= -delta else "b"
    return "c" if r >= delta else "d"


def flip_analysis(data: Dataset, tau: float, lam: float, delta: Optional[float] = None,
                  loo: Optional[LooResult] = None) -> List[FlipRecord]:
    """Cases whose full-data and LOO residuals differ in sign (zero counts as a sign).

    ``approx_error`` is the first-order GACV-style approximation of the loss
    change minus the true change. ``delta`` defaults to ``1e-4 * scale``.
    """
    if delta is None:
        delta = 1e-4 * data.scale
    if not delta > 0:
        raise ValidationError("delta must be positive")
    if loo is None:
        loo = loo_at(data, tau, lam)
    full = loo.full
    tol = MEMBERSHIP_TOL * data.scale
    status = full.partition.status()
    r = data.y - full.beta0 - data.X @ full.beta
    r[status == ELBOW] = 0.0
    r_loo = data.y - loo.predictions
    out = []
    for i in range(data.n):
        if abs(r_loo[i]) <= tol:
            continue  # negligible approximation error
        s_full = 0 if r[i] == 0.0 else int(np.sign(r[i]))
        if s_full == int(np.sign(r_loo[i])):
            continue
        d1 = float(smoothed_check_derivative(r[i], tau, delta))
        err = d1 * (r_loo[i] - r[i]) - (check_loss(r_loo[i], tau) - check_loss(r[i], tau))
        rec = FlipRecord(i, float(r[i]), float(r_loo[i]), _scenario(r_loo[i], r[i], delta),
                         float(err), bool(status[i] == ELBOW))
        if not rec.in_elbow:
            log.info("flipped case %d at lambda=%g lies outside the elbow", i, lam)
        out.append(rec)
    return out
