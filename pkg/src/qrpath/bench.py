"""Benchmark harness: weight-path breakpoint counts and LOO runtime per case.

Timings are wall clock, the median of ``inner`` repetitions, with I/O and
data generation excluded. Certification is switched off inside timed regions
for every strategy alike.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Dataset, FitConfig
from .data import SimSpec, simulate
from .exceptions import ValidationError
from .lambda_path import build_lambda_path, lambda_grid, log_grid
from .omega_path import build_omega_path
from .oracle import BRUTE_FORCE_CAP, oracle_solve

TABLE_RANGE = (0.01, 100.0)
AUTO_FLOOR = 1e-4
# "omega" and "lambda" both time the weight paths against one penalty path per
# case-deleted dataset; "refit" swaps that baseline for oracle refits
BASELINES = ("omega", "lambda", "refit", "both")


@dataclass(frozen=True)
class BenchRow:
    n: int
    p: int
    tau: float
    replicate: int
    seed: int
    n_lambda: int
    lambda_lo: float
    lambda_hi: float
    omega_sec_per_case: float
    lambda_sec_per_case: float  # NaN when not run
    refit_sec_per_case: float  # NaN when not run
    mean_breakpoints: float
    max_elbow: int

    def as_dict(self):
        return asdict(self)


def check_entry(n: int, p: int, tau: float, baseline: str) -> Optional[str]:
    """Reason the grid entry cannot run, or ``None``."""
    if n < 2 or p < 1:
        return f"need n >= 2 and p >= 1 (got n={n}, p={p})"
    if not 0.0 < tau < 1.0:
        return f"tau must lie in (0, 1) (got {tau})"
    if baseline in ("refit", "both") and n > BRUTE_FORCE_CAP:
        return f"refit baseline is capped at n <= {BRUTE_FORCE_CAP} (got n={n})"
    return None


def bench_grid(data: Dataset, tau: float, n_lambda: int, lambda_range="table"):
    """Descending grid: the fixed range (default 0.01..100) or ``"auto"`` over
    the full-data breakpoint range floored at 1e-4."""
    if lambda_range == "table":
        lambda_range = TABLE_RANGE
    if lambda_range == "auto":
        path = build_lambda_path(data, tau, AUTO_FLOOR, check=False)
        return lambda_grid(path, n_lambda, AUTO_FLOOR)[::-1]
    lo, hi = lambda_range
    return log_grid(float(lo), float(hi), n_lambda)[::-1]


def omega_strategy(data: Dataset, tau: float, grid) -> Tuple[np.ndarray, np.ndarray, int]:
    """One penalty path, then ``n`` weight paths per grid point."""
    path = build_lambda_path(data, tau, float(np.min(grid)), check=False)
    pred = np.empty((len(grid), data.n))
    nbp = np.empty((len(grid), data.n), dtype=int)
    emax = 0
    for k, lam in enumerate(grid):
        full = path.solution_at(lam)
        cfg = FitConfig(tau, lam)
        for i in range(data.n):
            wp = build_omega_path(data, cfg, i, full, check=False, store=False)
            t = wp.terminal
            pred[k, i] = t.beta0 + data.X[i] @ t.beta
            nbp[k, i] = wp.n_breakpoints
            emax = max(emax, wp.max_elbow)
    return pred, nbp, emax


def lambda_strategy(data: Dataset, tau: float, grid) -> np.ndarray:
    """A separate penalty path per case-deleted dataset, interpolated at the grid."""
    lo = float(np.min(grid))
    pred = np.empty((len(grid), data.n))
    for i in range(data.n):
        path = build_lambda_path(data.drop(i), tau, lo, check=False)
        xi = data.X[i]
        for k, lam in enumerate(grid):
            s = path.solution_at(lam)
            pred[k, i] = s.beta0 + xi @ s.beta
    return pred


def refit_strategy(data: Dataset, tau: float, grid) -> np.ndarray:
    pred = np.empty((len(grid), data.n))
    for k, lam in enumerate(grid):
        cfg = FitConfig(tau, lam)
        for i in range(data.n):
            s = oracle_solve(data, cfg, 0.0, i)
            pred[k, i] = s.beta0 + data.X[i] @ s.beta
    return pred


def _timed(fn, inner):
    times, out = [], None
    for _ in range(inner):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def run_replicate(n: int, p: int, tau: float, replicate: int, seed: int, n_lambda: int,
                  baseline: str = "omega", lambda_range="table", inner: int = 3) -> BenchRow:
    if baseline not in BASELINES:
        raise ValidationError(f"baseline must be one of {BASELINES}")
    reason = check_entry(n, p, tau, baseline)
    if reason:
        raise ValidationError(reason)
    data = simulate(SimSpec(n, p, seed))
    grid = bench_grid(data, tau, n_lambda, lambda_range)
    t_omega, (pred, nbp, emax) = _timed(lambda: omega_strategy(data, tau, grid), inner)
    t_lam = t_ref = float("nan")
    if baseline in ("omega", "lambda", "both"):
        t_lam, _ = _timed(lambda: lambda_strategy(data, tau, grid), inner)
        t_lam /= n
    if baseline in ("refit", "both"):
        t_ref, _ = _timed(lambda: refit_strategy(data, tau, grid), inner)
        t_ref /= n
    return BenchRow(n, p, float(tau), replicate, seed, n_lambda, float(grid[-1]), float(grid[0]),
                    t_omega / n, t_lam, t_ref, float(nbp.mean()), int(emax))


def mean_se(values: Sequence[float]) -> Tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def table2_breakpoints(n: int, p: int, tau: float, replicates: int = 20, n_lambda: int = 50,
                       seed0: int = 0, lambda_range="table") -> List[float]:
    """Per-replicate mean weight-path breakpoint count (over grid points and cases)."""
    out = []
    for r in range(replicates):
        data = simulate(SimSpec(n, p, seed0 + r))
        grid = bench_grid(data, tau, n_lambda, lambda_range)
        _, nbp, _ = omega_strategy(data, tau, grid)
        out.append(float(nbp.mean()))
    return out
