"""Case-weight adjusted solution path: weight of one case from 1 down to 0.

Between breakpoints the partition is fixed and ``lam * beta0``, the elbow
duals, ``lam * beta`` and ``lam * r`` move linearly in the weight. At a
breakpoint one case enters or leaves the elbow. The terminal solution is the
fit with the case left out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (ELBOW, LEFT, RIGHT, Dataset, FitConfig, Partition, QuantileSolution,
                   kkt_residual, validate_istar, validate_omega)
from .exceptions import (KKTCertificateError, PathDivergenceError, QRPathError,
                         SingularElbowError, ValidationError)
from .linalg import DRIFT_TOL, ElbowGramInverse

log = logging.getLogger(__name__)

KKT_TOL = 1e-8
THETA_TOL = 1e-12
TIE_TOL = 1e-12
RECOMPUTE_EVERY = 32
ZERO_SNAP = 1e-11


@dataclass(frozen=True, eq=False)
class OmegaSegment:
    """Linear piece on ``[omega_lo, omega_hi]``, anchored at ``omega_hi``.

    ``b0``, ``b``, ``h`` and ``dbeta`` are the slopes of ``lam * beta0``, the
    elbow duals, ``lam * r`` and ``lam * beta`` with respect to the weight;
    ``dtheta_star`` is the slope of the weighted case's dual.
    """

    omega_hi: float
    omega_lo: float
    partition: Partition
    b0: float
    b: np.ndarray
    h: np.ndarray
    dbeta: np.ndarray
    dtheta_star: float
    anchor: QuantileSolution
    elbow: tuple = ()  # elbow order matching ``b``

    def solution_at(self, omega: float, lam: float) -> QuantileSolution:
        d = omega - self.omega_hi
        if d == 0.0:
            return self.anchor
        a = self.anchor
        theta = np.array(a.theta)
        theta[list(self.elbow)] += self.b * d
        istar = a.starred
        theta[istar] += self.dtheta_star * d
        return QuantileSolution(a.beta0 + self.b0 * d / lam, a.beta + self.dbeta * d / lam,
                                theta, a.residuals + self.h * d / lam, self.partition,
                                omega, istar)


@dataclass(eq=False)
class OmegaPath:
    istar: int
    lam: float
    tau: float
    initial: QuantileSolution
    segments: List[OmegaSegment] = field(default_factory=list)
    breakpoints: List[float] = field(default_factory=lambda: [1.0])
    terminal: Optional[QuantileSolution] = None
    jumps: List[float] = field(default_factory=list)  # weights where the intercept was re-anchored
    max_elbow: int = 0

    @property
    def n_breakpoints(self) -> int:
        """Partition changes strictly inside (0, 1)."""
        return sum(1 for w in self.breakpoints[1:] if 0.0 < w < 1.0)

    @property
    def knots(self) -> np.ndarray:
        ks = list(self.breakpoints)
        if ks[-1] > 0.0:
            ks.append(0.0)
        return np.array(ks)

    def eval_at(self, omega: float) -> QuantileSolution:
        return eval_at(self, omega)


def eval_at(path: OmegaPath, omega: float) -> QuantileSolution:
    """Solution at weight ``omega`` by interpolation on the covering segment."""
    omega = validate_omega(omega)
    if omega == 1.0:
        return path.initial
    if omega == 0.0:
        return path.terminal
    for seg in path.segments:
        if seg.omega_lo < omega <= seg.omega_hi:
            return seg.solution_at(omega, path.lam)
    return path.segments[-1].solution_at(omega, path.lam)


def slopes(data: Dataset, cfg: FitConfig, partition: Partition, istar: int,
           gram: ElbowGramInverse):
    """Slopes ``(b0, b, h)`` of ``lam * beta0``, elbow duals and ``lam * r``.

    ``gram`` must be ordered like ``partition.elbow``; the weighted case must
    be outside the elbow.
    """
    status = partition.status()
    if status[istar] == ELBOW:
        raise ValidationError("slopes require the weighted case outside the elbow")
    b0, b, h, _ = _slopes(data, cfg.tau, status, istar, gram)
    return b0, b, h


def _slopes(data, tau, status, istar, gram):
    c = tau - (1.0 if status[istar] == LEFT else 0.0)
    inv = gram.inv
    Gu = inv @ (gram.rows @ data.Xtilde[istar])
    g1 = inv.sum(axis=1)
    b0 = (1.0 - Gu.sum()) / g1.sum() * c
    b = -(b0 * g1 + c * Gu)
    dbeta = gram.rows[:, 1:].T @ b + c * data.X[istar]
    h = -b0 - data.X @ dbeta
    h[gram.idx] = 0.0
    return b0, b, h, dbeta


def _next_breakpoint(tau, omega, status, E, theta, b, lam_r, h, istar):
    """Largest admissible weight below ``omega`` where the partition changes.

    ``E`` is the elbow index array ordered like ``b``. Returns
    ``(omega_next, kind, case, side, n_tied)`` with ``kind`` 1 for an elbow
    entry and 0 for an exit, or ``None`` when no event occurs before 0. Ties
    within ``TIE_TOL`` (relative) go to entries first, then the smallest index.
    Call under ``np.errstate(divide="ignore", invalid="ignore")``.
    """
    inf = np.inf
    top_exit = -inf
    if E.size:
        # theta_j moves by b_j per unit of weight; it falls (toward tau - 1) as
        # the weight decreases when b_j > 0
        step = (np.where(b > 0, tau - 1.0, tau) - theta[E]) / b
        np.minimum(step, 0.0, out=step)
        step[(np.abs(b) * omega <= THETA_TOL) | (step < -omega)] = -inf
        top_exit = omega + step.max()
    # a residual heads for zero when its sign opposes the slope's: status * h > 0
    ratio = lam_r / h
    ratio[~(status * h > 0)] = inf
    ratio[istar] = inf
    np.maximum(ratio, 0.0, out=ratio)
    rmin = ratio.min()
    top_ent = omega - rmin if rmin <= omega else -inf
    top = max(top_exit, top_ent)
    if top == -inf:
        return None
    cut = top - TIE_TOL * max(top, 1e-300)
    ent = np.flatnonzero(omega - ratio >= cut) if top_ent >= cut else E[:0]
    ex = np.flatnonzero(omega + step >= cut) if top_exit >= cut else E[:0]
    n_tied = ent.size + ex.size
    if ent.size:
        j = int(ent[0])
        return max(omega - float(ratio[j]), 0.0), 1, j, None, n_tied
    k = ex[np.argmin(E[ex])]
    return max(omega + float(step[k]), 0.0), 0, int(E[k]), LEFT if b[k] > 0 else RIGHT, n_tied


class _State:
    """Mutable walker state; ``r`` holds residuals (not scaled by ``lam``)."""

    def __init__(self, data, cfg, istar, sol):
        self.data, self.cfg, self.istar = data, cfg, istar
        self.beta0 = sol.beta0
        self.beta = np.array(sol.beta)
        self.theta = np.array(sol.theta)
        self.status = sol.partition.status().copy()
        self.r = data.y - self.beta0 - data.X @ self.beta
        E = sol.partition.elbow
        self.r[list(E)] = 0.0
        self.gram = ElbowGramInverse.init(data.Xtilde[list(E)], E)

    def solution(self, omega):
        return QuantileSolution(self.beta0, self.beta, self.theta, self.r,
                                Partition.from_status(self.status), omega, self.istar)

    def recompute(self):
        """Reset ``beta`` from the duals and the intercept from the elbow equations."""
        d = self.data
        self.beta = d.X.T @ self.theta / self.cfg.lam
        E = list(self.gram.elbow)
        if E:
            self.beta0 = float(np.mean(d.y[E] - d.X[E] @ self.beta))
        self.r = d.y - self.beta0 - d.X @ self.beta
        self.r[E] = 0.0

    def resync(self, omega):
        from .oracle import oracle_solve

        sol = oracle_solve(self.data, self.cfg, omega, self.istar)
        self.__init__(self.data, self.cfg, self.istar, sol)


def _reanchor_empty_elbow(st: _State, tau: float):
    """Restore a one-case elbow when the last elbow case has just left.

    With no elbow the duals balance exactly at the current weight and the
    intercept is free inside an interval. Just below that weight the balance
    tips by the weighted case's dual slope; the case that absorbs it is the
    nearest residual on the side that keeps its dual feasible: the largest
    negative residual when the weighted case is right of the elbow, the
    smallest positive one when it is left.
    """
    istar = st.istar
    others = np.ones(st.data.n, dtype=bool)
    others[istar] = False
    if st.status[istar] == RIGHT:
        pool = np.flatnonzero(others & (st.status == LEFT))
        if pool.size == 0:
            raise QRPathError("no left case available to re-anchor an empty elbow")
        j = int(pool[np.argmax(st.r[pool])])
    else:
        pool = np.flatnonzero(others & (st.status == RIGHT))
        if pool.size == 0:
            raise QRPathError("no right case available to re-anchor an empty elbow")
        j = int(pool[np.argmin(st.r[pool])])
    shift = st.r[j]
    st.beta0 += shift
    st.r -= shift
    st.r[j] = 0.0
    st.status[j] = ELBOW
    st.gram = st.gram.add(st.data.Xtilde[j], j)
    return j


def build_omega_path(data: Dataset, cfg: FitConfig, istar: int, full: QuantileSolution,
                     check: bool = True, store: bool = True) -> OmegaPath:
    """Walk the weight of case ``istar`` from 1 to 0 starting at ``full``.

    ``check`` certifies every breakpoint with :func:`kkt_residual`;
    ``store=False`` keeps only the terminal solution and breakpoint list.
    """
    istar = validate_istar(istar, data.n)
    tol = KKT_TOL * data.scale
    st = _State(data, cfg, istar, full)
    path = OmegaPath(istar, cfg.lam, cfg.tau, full)
    path.max_elbow = len(st.gram)

    def certify(w, where):
        sol = st.solution(w)
        res = kkt_residual(sol, data, cfg)
        if res <= tol:
            return
        if st.gram.residual() > DRIFT_TOL:
            st.gram = st.gram.refreshed()
        st.recompute()
        if kkt_residual(st.solution(w), data, cfg) <= tol:
            return
        log.warning("omega path (case %d) certificate %.3g at omega=%g after %s; re-deriving "
                 "partition with the oracle", istar, res, w, where)
        st.resync(w)
        if st.status[istar] == ELBOW:
            return
        res = kkt_residual(st.solution(w), data, cfg)
        if res > tol:
            raise KKTCertificateError(
                f"KKT certificate {res:.3g} exceeds {tol:.3g} at omega={w:g} (case {istar})")

    with np.errstate(divide="ignore", invalid="ignore"):
        _walk(st, path, data, cfg, istar, check, store, certify)
    st.theta[istar] = 0.0 if st.status[istar] != ELBOW else st.theta[istar]
    path.terminal = st.solution(0.0)
    if check:
        res = kkt_residual(path.terminal, data, cfg)
        if res > tol:
            raise KKTCertificateError(
                f"terminal KKT certificate {res:.3g} exceeds {tol:.3g} (case {istar})")
    return path


def _walk(st, path, data, cfg, istar, check, store, certify):
    tau, lam = cfg.tau, cfg.lam
    n, p = data.n, data.p
    cap = 50 * (n + p)
    Xt = data.Xtilde
    omega = 1.0
    steps = 0
    while omega > 0.0:
        if st.status[istar] == ELBOW:
            # weighted case in the elbow: everything is frozen until its dual
            # reaches the shrinking bound omega * (tau - 1{theta < 0})
            th = st.theta[istar]
            w1 = th / (tau - (1.0 if th < 0 else 0.0))
            w1 = min(max(w1, 0.0), omega)
            if w1 <= ZERO_SNAP:
                w1 = 0.0
            if abs(th - omega * tau) <= THETA_TOL or abs(th - omega * (tau - 1.0)) <= THETA_TOL:
                log.info("case %d starts on a dual bound; treated as outside the elbow", istar)
                w1 = omega
            if w1 < omega and store:
                path.segments.append(OmegaSegment(
                    omega, w1, Partition.from_status(st.status), 0.0, np.zeros(len(st.gram)),
                    np.zeros(n), np.zeros(p), 0.0, st.solution(omega), st.gram.elbow))
            if w1 < omega:
                path.breakpoints.append(w1)
            omega = w1
            if omega == 0.0:
                break
            st.status[istar] = RIGHT if th > 0 else LEFT
            st.theta[istar] = omega * (tau if th > 0 else tau - 1.0)
            if len(st.gram) > 1:
                st.gram = st.gram.remove(st.gram.position(istar))
            else:
                st.gram = ElbowGramInverse.empty(p + 1)
            continue

        if len(st.gram) == 0:
            j = _reanchor_empty_elbow(st, tau)
            path.jumps.append(omega)
            log.debug("case %d: empty elbow at omega=%g re-anchored on case %d", istar, omega, j)

        b0, b, h, dbeta = _slopes(data, tau, st.status, istar, st.gram)
        E = st.gram.elbow
        ev = _next_breakpoint(tau, omega, st.status, st.gram.idx, st.theta, b, lam * st.r, h,
                              istar)
        if ev is not None and ev[0] <= ZERO_SNAP:
            # an event this close to 0 is roundoff for one exactly at 0, where
            # the terminal solution is the limit of the current segment
            ev = None
        w_next = 0.0 if ev is None else ev[0]
        c = tau - (1.0 if st.status[istar] == LEFT else 0.0)
        if w_next < omega:
            if store:
                path.segments.append(OmegaSegment(
                    omega, w_next, Partition.from_status(st.status), b0, b, h, dbeta, c,
                    st.solution(omega), E))
            d = w_next - omega
            st.beta0 += b0 * d / lam
            st.beta = st.beta + dbeta * (d / lam)
            st.theta[st.gram.idx] += b * d
            st.theta[istar] = w_next * c
            st.r = st.r + h * (d / lam)
            omega = w_next
        if ev is None:
            break
        _, kind, j, side, n_tied = ev
        if n_tied > 1:
            log.debug("case %d: %d simultaneous events at omega=%g", istar, n_tied, omega)
        try:
            if kind == 1:
                st.r[j] = 0.0
                st.status[j] = ELBOW
                st.gram = st.gram.add(Xt[j], j)
            else:
                st.theta[j] = tau - 1.0 if side == LEFT else tau
                st.status[j] = side
                if len(st.gram) > 1:
                    st.gram = st.gram.remove(st.gram.position(j))
                else:
                    st.gram = ElbowGramInverse.empty(p + 1)
        except SingularElbowError:
            log.warning("case %d: singular elbow at omega=%g; re-deriving with the oracle", istar, omega)
            st.resync(omega)
        if path.breakpoints[-1] > omega:
            path.breakpoints.append(omega)
        path.max_elbow = max(path.max_elbow, len(st.gram))
        steps += 1
        if steps > cap:
            raise PathDivergenceError(
                f"omega path for case {istar} exceeded {cap} breakpoints")
        if steps % RECOMPUTE_EVERY == 0:
            st.recompute()
        if check or n_tied > 1:
            certify(omega, "an elbow " + ("entry" if kind == 1 else "exit"))
