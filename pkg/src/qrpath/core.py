"""Domain types, the check loss and the KKT certificate.

Indices are 0-based throughout the Python API. A case's *status* is encoded
as ``-1`` (left of the elbow, negative residual), ``0`` (elbow, zero
residual) or ``+1`` (right of the elbow, positive residual).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError

LEFT, ELBOW, RIGHT = -1, 0, 1

# relative set-membership tolerance: |r_i| <= MEMBERSHIP_TOL * scale  =>  elbow
MEMBERSHIP_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or y.ndim != 1:
            raise ValidationError("X must be 2-d and y 1-d")
        n, p = X.shape
        if y.shape[0] != n:
            raise ValidationError(f"X has {n} rows but y has {y.shape[0]} entries")
        if n < 2 or p < 1:
            raise ValidationError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError("X and y must be finite")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def Xtilde(self) -> np.ndarray:
        """The augmented design (1, X)."""
        return _frozen(np.column_stack([np.ones(self.n), self.X]))

    @cached_property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.y))))

    def drop(self, i: int) -> "Dataset":
        keep = np.arange(self.n) != i
        return Dataset(self.X[keep], self.y[keep])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y)

    __hash__ = None


@dataclass(frozen=True)
class FitConfig:
    """Quantile level ``tau`` in (0, 1) and ridge penalty ``lam`` > 0."""

    tau: float
    lam: float

    def __post_init__(self):
        tau, lam = float(self.tau), float(self.lam)
        if not (0.0 < tau < 1.0):
            raise ValidationError(f"tau must lie in (0, 1), got {self.tau!r}")
        if not (np.isfinite(lam) and lam > 0.0):
            raise ValidationError(f"lambda must be a positive finite number, got {self.lam!r}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class Partition:
    elbow: tuple
    left: tuple
    right: tuple

    @classmethod
    def from_status(cls, status) -> "Partition":
        status = np.asarray(status)
        return cls(
            elbow=tuple(int(i) for i in np.flatnonzero(status == ELBOW)),
            left=tuple(int(i) for i in np.flatnonzero(status == LEFT)),
            right=tuple(int(i) for i in np.flatnonzero(status == RIGHT)),
        )

    @property
    def n(self) -> int:
        return len(self.elbow) + len(self.left) + len(self.right)

    def status(self) -> np.ndarray:
        s = np.empty(self.n, dtype=np.int8)
        s[list(self.left)] = LEFT
        s[list(self.elbow)] = ELBOW
        s[list(self.right)] = RIGHT
        return s

    def is_partition_of(self, n: int) -> bool:
        allidx = self.elbow + self.left + self.right
        return len(allidx) == n and set(allidx) == set(range(n))


@dataclass(frozen=True, eq=False)
class QuantileSolution:
    """Primal/dual solution of the case-weight adjusted problem at one ``omega``."""

    beta0: float
    beta: np.ndarray
    theta: np.ndarray
    residuals: np.ndarray
    partition: Partition
    omega: float = 1.0
    starred: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "beta", _frozen(self.beta))
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "residuals", _frozen(self.residuals))
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def coef(self) -> np.ndarray:
        """(beta0, beta) stacked."""
        return np.concatenate([[self.beta0], self.beta])

    def predict(self, X) -> np.ndarray:
        return self.beta0 + np.asarray(X, dtype=float) @ self.beta


def check_loss(r, tau):
    """Pinball loss ``tau * r_+ + (1 - tau) * r_-``; vectorised over ``r``."""
    r = np.asarray(r, dtype=float)
    out = np.where(r > 0, tau * r, (tau - 1.0) * r)
    return float(out) if out.ndim == 0 else out


def case_weights(n: int, omega: float = 1.0, istar: Optional[int] = None) -> np.ndarray:
    w = np.ones(n)
    if istar is not None:
        w[istar] = omega
    return w


def objective(data: Dataset, cfg: FitConfig, omega: float, istar: Optional[int],
              beta0: float, beta) -> float:
    """Case-weight adjusted penalised check-loss objective."""
    beta = np.asarray(beta, dtype=float)
    r = data.y - beta0 - data.X @ beta
    w = case_weights(data.n, omega, istar)
    return float(np.sum(w * check_loss(r, cfg.tau)) + 0.5 * cfg.lam * beta @ beta)


def dual_bounds(n: int, tau: float, omega: float = 1.0, istar: Optional[int] = None):
    """Per-case interval ``[lo, hi]`` that the dual variable must lie in."""
    w = case_weights(n, omega, istar)
    return w * (tau - 1.0), w * tau


def partition_from_residuals(residuals, tol: float = MEMBERSHIP_TOL, scale: float = 1.0) -> Partition:
    """Split cases by residual sign; ``|r_i| <= tol * scale`` counts as elbow.

    ``scale`` should be ``max(1, ||y||_inf)``; :func:`solution_from_coef` passes it.
    """
    if tol < 0:
        raise ValidationError("tol must be nonnegative")
    r = np.asarray(residuals, dtype=float)
    status = np.sign(r).astype(np.int8)
    status[np.abs(r) <= tol * scale] = ELBOW
    return Partition.from_status(status)


def kkt_residual(sol: QuantileSolution, data: Dataset, cfg: FitConfig,
                 weights=None) -> float:
    """Max-norm violation of the KKT system; zero iff ``sol`` is exactly optimal.

    Residuals are recomputed from ``(beta0, beta)``; the stored ``residuals``
    are not trusted. Membership comes from ``sol.partition``. ``weights``
    overrides the single-case weighting carried by ``sol``.
    """
    n, p = data.n, data.p
    if sol.beta.shape != (p,) or sol.theta.shape != (n,):
        raise ValidationError(
            f"solution dimensions (beta {sol.beta.shape}, theta {sol.theta.shape}) "
            f"do not match data (n={n}, p={p})")
    if sol.partition.n != n:
        raise ValidationError("partition does not cover the data")
    theta = sol.theta
    r = data.y - sol.beta0 - data.X @ sol.beta
    if weights is None:
        lo, hi = dual_bounds(n, cfg.tau, sol.omega, sol.starred)
    else:
        w = np.asarray(weights, dtype=float)
        lo, hi = w * (cfg.tau - 1.0), w * cfg.tau
    status = sol.partition.status()

    viol = np.empty(n)
    e, L, R = status == ELBOW, status == LEFT, status == RIGHT
    box = np.maximum(np.maximum(lo - theta, theta - hi), 0.0)
    viol[e] = np.maximum(np.abs(r[e]), box[e])
    viol[L] = np.maximum(np.abs(theta[L] - lo[L]), np.maximum(r[L], 0.0))
    viol[R] = np.maximum(np.abs(theta[R] - hi[R]), np.maximum(-r[R], 0.0))

    stationarity = np.max(np.abs(data.X.T @ theta - cfg.lam * sol.beta))
    return float(max(abs(theta.sum()), stationarity, viol.max()))


def solution_from_coef(data: Dataset, cfg: FitConfig, beta0: float, beta, theta,
                       omega: float = 1.0, istar: Optional[int] = None,
                       partition: Optional[Partition] = None) -> QuantileSolution:
    """Assemble a :class:`QuantileSolution`, deriving the partition if absent."""
    beta = np.asarray(beta, dtype=float)
    r = data.y - beta0 - data.X @ beta
    if partition is None:
        partition = partition_from_residuals(r, MEMBERSHIP_TOL, data.scale)
    return QuantileSolution(beta0, beta, theta, r, partition, omega, istar)


def validate_istar(istar, n: int) -> int:
    if istar is None or not (0 <= int(istar) < n) or int(istar) != istar:
        raise ValidationError(f"case index must be an integer in [0, {n}), got {istar!r}")
    return int(istar)


def validate_omega(omega) -> float:
    omega = float(omega)
    if not (0.0 <= omega <= 1.0):
        raise ValidationError(f"omega must lie in [0, 1], got {omega!r}")
    return omega


def as_dataset(X, y=None) -> Dataset:
    if isinstance(X, Dataset):
        return X
    return Dataset(X, y)


__all__: Sequence[str] = [
    "Dataset", "FitConfig", "Partition", "QuantileSolution", "check_loss", "objective",
    "kkt_residual", "partition_from_residuals", "dual_bounds", "case_weights",
    "solution_from_coef", "LEFT", "ELBOW", "RIGHT", "MEMBERSHIP_TOL",
]
