"""Full-data solution path in the penalty ``lam``.

With the partition held fixed, ``lam * beta0`` and the elbow duals are affine
in ``lam`` (the same elbow system that drives the case-weight path, with the
penalty as the homotopy parameter). The path starts at ``lam = inf`` where the
slopes vanish and the intercept is a sample quantile, and walks down through
elbow entries and exits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (ELBOW, LEFT, MEMBERSHIP_TOL, RIGHT, Dataset, FitConfig, Partition,
                   QuantileSolution, kkt_residual)
from .exceptions import KKTCertificateError, PathDivergenceError, SingularElbowError, ValidationError
from .linalg import ElbowGramInverse

log = logging.getLogger(__name__)

KKT_TOL = 1e-8
THETA_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LambdaSegment:
    """``lam * beta0 = a0 + lam * a1`` and ``theta_E = t0 + lam * t1`` on ``[lam_lo, lam_hi]``."""

    lam_hi: float
    lam_lo: float
    status: np.ndarray
    elbow: tuple
    a0: float
    a1: float
    t0: np.ndarray
    t1: np.ndarray
    theta_fixed: np.ndarray  # duals with the elbow entries zeroed

    @property
    def partition(self) -> Partition:
        return Partition.from_status(self.status)


@dataclass(eq=False)
class LambdaPath:
    data: Dataset
    tau: float
    lambda_min: float
    segments: List[LambdaSegment] = field(default_factory=list)
    breakpoints: List[float] = field(default_factory=list)
    complete: bool = False  # True when the last segment extends down to 0

    @property
    def lambda_max(self) -> float:
        return self.breakpoints[0] if self.breakpoints else np.inf

    def segment_for(self, lam: float) -> LambdaSegment:
        if lam <= 0:
            raise ValidationError("lambda must be positive")
        if lam < self.lambda_min * (1 - 1e-12) and not self.complete:
            raise ValidationError(
                f"lambda={lam:g} lies below the path's lambda_min={self.lambda_min:g}")
        # segments are ordered by decreasing lam_hi; pick lam_lo < lam <= lam_hi
        his = np.array([s.lam_hi for s in self.segments])
        k = int(np.searchsorted(-his, -lam, side="right")) - 1
        return self.segments[max(k, 0)]

    def solution_at(self, lam: float) -> QuantileSolution:
        return _evaluate(self.data, self.tau, self.segment_for(lam), lam)

    def elbow_size_at(self, lam: float) -> int:
        return len(self.segment_for(lam).elbow)


def _evaluate(data: Dataset, tau: float, seg: LambdaSegment, lam: float) -> QuantileSolution:
    theta = seg.theta_fixed.copy()
    E = list(seg.elbow)
    theta[E] = seg.t0 + lam * seg.t1
    beta = data.X.T @ theta / lam
    beta0 = seg.a0 / lam + seg.a1
    r = data.y - beta0 - data.X @ beta
    r[E] = 0.0
    return QuantileSolution(beta0, beta, theta, r, Partition.from_status(seg.status), 1.0, None)


def _initial_state(data: Dataset, tau: float):
    """Partition at ``lam = inf``: one order statistic of ``y`` in the elbow.

    With ``k`` cases strictly below the elbow case, its dual is
    ``k - (n - 1) tau``, which must lie in ``[tau - 1, tau]``; hence
    ``k = floor(n tau)``, or ``n tau - 1`` when ``n tau`` is an integer (the
    dual then sits on its lower bound). Ties in ``y`` go to the smallest index.
    """
    n = data.n
    order = np.lexsort((np.arange(n), data.y))
    nt = n * tau
    k = int(np.floor(nt + 1e-12))
    if abs(nt - round(nt)) <= 1e-9 * max(1.0, nt):
        k = int(round(nt)) - 1
    e = int(order[k])
    status = np.full(n, RIGHT, dtype=np.int8)
    status[order[:k]] = LEFT
    status[e] = ELBOW
    theta = np.where(status == LEFT, tau - 1.0, tau)
    theta[e] = k - (n - 1) * tau
    return status, theta


def _segment_coefficients(data, tau, status, elbow, gram, theta):
    Xt = data.Xtilde
    E = list(elbow)
    O = status != ELBOW
    thO = np.where(O, theta, 0.0)
    s = thO.sum()
    if len(E) == 1:
        # a single elbow dual is pinned by sum(theta) = 0
        d = float(Xt[E[0]] @ Xt[E[0]])
        v = Xt.T @ thO
        # elbow equation d * theta_e = lam * y_e - Xt_e . v - lam * beta0 with theta_e = -s
        a1 = float(data.y[E[0]])
        a0 = float(-(Xt[E[0]] @ v) + s * d)
        return a0, a1, np.array([-s]), np.zeros(1), thO
    inv = gram.inv
    XtE = Xt[E]
    v = Xt.T @ thO
    g1 = inv.sum(axis=1)
    q = g1.sum()
    gy = inv @ data.y[E]
    gv = inv @ (XtE @ v)
    a1 = gy.sum() / q
    a0 = (s - gv.sum()) / q
    t1 = gy - a1 * g1
    t0 = -gv - a0 * g1
    return float(a0), float(a1), t0, t1, thO


def _next_event(data, tau, status, elbow, a0, a1, t0, t1, thO, lam_cur):
    """Largest admissible ``lam < lam_cur`` at which the partition changes."""
    X = data.X
    E = list(elbow)
    B1 = X[E].T @ t1
    B0 = X[E].T @ t0 + X.T @ thO
    Q1 = data.y - a1 - X @ B1
    Q0 = -a0 - X @ B0
    cands = []  # (lam, kind, index, side); kind 1 = entry, 0 = exit
    O = np.flatnonzero(status != ELBOW)
    q1 = Q1[O]
    toward = np.where(status[O] == LEFT, q1 < 0, q1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_hit = -Q0[O] / q1
    for j, ok, lh in zip(O, toward, lam_hit):
        if ok and np.isfinite(lh):
            cands.append((min(lh, lam_cur), 1, int(j), None))
    scale_t = lam_cur if np.isfinite(lam_cur) else 1.0
    for pos, j in enumerate(E):
        slope = t1[pos]
        if abs(slope) * scale_t <= THETA_TOL:
            continue
        bound = tau - 1.0 if slope > 0 else tau
        lh = (bound - t0[pos]) / slope
        cands.append((min(lh, lam_cur), 0, int(j), LEFT if slope > 0 else RIGHT))
    cands = [c for c in cands if c[0] > 0]
    if not cands:
        return None
    top = max(c[0] for c in cands)
    tied = [c for c in cands if c[0] >= top * (1 - TIE_TOL)]
    tied.sort(key=lambda c: (-c[1], c[2]))
    if len(tied) > 1:
        log.debug("simultaneous lambda events at %g: %s", top, tied)
    lam_next, kind, j, side = tied[0]
    return lam_next, kind, j, side, len(tied) > 1


def build_lambda_path(data: Dataset, tau: float, lambda_min: float,
                      check: bool = True) -> LambdaPath:
    """Trace the full-data path from ``lam = inf`` down to ``lambda_min``."""
    if not (lambda_min > 0):
        raise ValidationError("lambda_min must be positive")
    FitConfig(tau, lambda_min)
    n, p = data.n, data.p
    cap = 50 * (n + p)
    Xt = data.Xtilde
    status, theta = _initial_state(data, tau)
    elbow = tuple(int(i) for i in np.flatnonzero(status == ELBOW))
    gram = ElbowGramInverse.init(Xt[list(elbow)], elbow)
    path = LambdaPath(data, tau, lambda_min)
    lam_cur = np.inf
    tol = KKT_TOL * data.scale
    while True:
        a0, a1, t0, t1, thO = _segment_coefficients(data, tau, status, gram.elbow, gram, theta)
        ev = _next_event(data, tau, status, gram.elbow, a0, a1, t0, t1, thO, lam_cur)
        lam_lo = ev[0] if ev is not None else 0.0
        seg = LambdaSegment(lam_cur, lam_lo, status.copy(), gram.elbow, a0, a1,
                            np.array(t0), np.array(t1), thO)
        path.segments.append(seg)
        if ev is None or lam_lo < lambda_min:
            path.complete = ev is None
            break
        if len(path.breakpoints) >= cap:
            raise PathDivergenceError(
                f"lambda path exceeded {cap} breakpoints; the data are likely degenerate")
        lam_next, kind, j, side, tied = ev
        path.breakpoints.append(lam_next)
        theta = thO.copy()
        theta[list(gram.elbow)] = t0 + lam_next * t1
        try:
            if kind == 1:
                status[j] = ELBOW
                gram = gram.add(Xt[j], j)
            else:
                theta[j] = tau - 1.0 if side == LEFT else tau
                status[j] = side
                gram = gram.remove(gram.position(j))
        except SingularElbowError:
            status, theta, gram = _resync(data, tau, lam_next)
            tied = False
        lam_cur = lam_next
        if check or tied:
            a0c, a1c, t0c, t1c, thOc = _segment_coefficients(data, tau, status, gram.elbow, gram, theta)
            probe = LambdaSegment(lam_cur, lam_cur, status.copy(), gram.elbow, a0c, a1c, t0c, t1c, thOc)
            sol = _evaluate(data, tau, probe, lam_cur)
            if kkt_residual(sol, data, FitConfig(tau, lam_cur)) > tol:
                log.warning("lambda path certificate failed at %g; re-deriving partition", lam_cur)
                status, theta, gram = _resync(data, tau, lam_cur)
                a0c, a1c, t0c, t1c, thOc = _segment_coefficients(data, tau, status, gram.elbow, gram, theta)
                probe = LambdaSegment(lam_cur, lam_cur, status.copy(), gram.elbow, a0c, a1c, t0c, t1c, thOc)
                sol = _evaluate(data, tau, probe, lam_cur)
                res = kkt_residual(sol, data, FitConfig(tau, lam_cur))
                if res > tol:
                    raise KKTCertificateError(
                        f"lambda path KKT certificate {res:.3g} exceeds {tol:.3g} at lambda={lam_cur:g}")
    return path


def _resync(data, tau, lam):
    from .oracle import oracle_solve

    sol = oracle_solve(data, FitConfig(tau, lam))
    status = sol.partition.status()
    theta = np.array(sol.theta)
    elbow = tuple(int(i) for i in np.flatnonzero(status == ELBOW))
    gram = ElbowGramInverse.init(data.Xtilde[list(elbow)], elbow)
    return status, theta, gram


def full_fit_at(data: Dataset, tau: float, lam: float) -> QuantileSolution:
    """Full-data solution at one penalty value, read off the lambda path."""
    FitConfig(tau, lam)
    return build_lambda_path(data, tau, lam, check=False).solution_at(lam)


def log_grid(lo: float, hi: float, n_lambda: int) -> np.ndarray:
    if n_lambda < 2:
        raise ValidationError("n_lambda must be at least 2")
    if not (0 < lo <= hi):
        raise ValidationError("grid bounds must satisfy 0 < lo <= hi")
    g = np.exp(np.linspace(np.log(lo), np.log(hi), n_lambda))
    g[0], g[-1] = lo, hi
    return g


def lambda_grid(path: LambdaPath, n_lambda: int, lambda_min: Optional[float] = None) -> np.ndarray:
    """Log-spaced grid (ascending) over the path's breakpoint range.

    The lower end is the smallest breakpoint, raised to ``lambda_min``
    (default: the path's own ``lambda_min``) when the breakpoints go lower.
    """
    if len(path.breakpoints) < 2:
        raise ValidationError("the lambda path has fewer than two breakpoints")
    floor = path.lambda_min if lambda_min is None else lambda_min
    lo = max(min(path.breakpoints), floor)
    return log_grid(lo, path.lambda_max, n_lambda)
