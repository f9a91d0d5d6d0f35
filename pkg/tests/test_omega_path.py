import numpy as np
import pytest

from qrpath import FitConfig, ValidationError, kkt_residual, objective
from qrpath.core import ELBOW, LEFT, RIGHT, partition_from_residuals
from qrpath.lambda_path import full_fit_at
from qrpath.linalg import gram_inverse_init
from qrpath.omega_path import _next_breakpoint, build_omega_path, eval_at, slopes
from qrpath.oracle import oracle_solve

from conftest import random_data


def walk(data, tau, lam, istar):
    cfg = FitConfig(tau, lam)
    full = full_fit_at(data, tau, lam)
    return cfg, full, build_omega_path(data, cfg, istar, full)


def test_next_breakpoint_exit_arithmetic():
    status = np.array([ELBOW, RIGHT, LEFT], dtype=np.int8)
    theta = np.array([0.3, 0.5, -0.5])
    with np.errstate(divide="ignore", invalid="ignore"):
        ev = _next_breakpoint(0.5, 1.0, status, np.array([0]), theta, np.array([-0.5]),
                              np.array([0.0, 1.0, -1.0]), np.array([0.0, -1.0, 1.0]), 1)
    w, kind, j, side, _ = ev
    assert w == pytest.approx(0.6, abs=1e-15) and kind == 0 and j == 0 and side == RIGHT


def test_next_breakpoint_terminal():
    status = np.array([ELBOW, RIGHT, LEFT], dtype=np.int8)
    theta = np.array([0.3, 0.5, -0.5])
    with np.errstate(divide="ignore", invalid="ignore"):
        # b > 0 moves theta down toward tau - 1 = -0.5 but needs a step of 1.6 > omega;
        # residuals move by h * (omega - omega_m) / lam, so these head away from zero
        ev = _next_breakpoint(0.5, 1.0, status, np.array([0]), theta, np.array([0.5]),
                              np.array([0.0, 1.0, -1.0]), np.array([0.0, -1.0, 1.0]), 2)
    assert ev is None


def test_next_breakpoint_entry():
    status = np.array([ELBOW, RIGHT, LEFT], dtype=np.int8)
    theta = np.array([0.0, 0.5, -0.5])
    with np.errstate(divide="ignore", invalid="ignore"):
        # lam*r = 1.0 with slope h = 4: the residual reaches zero 0.25 below omega
        ev = _next_breakpoint(0.5, 1.0, status, np.array([0]), theta, np.array([1e-3]),
                              np.array([0.0, 1.0, -1.0]), np.array([0.0, 4.0, 0.0]), 2)
    assert ev[0] == pytest.approx(0.75) and ev[1] == 1 and ev[2] == 1


@pytest.mark.parametrize("seed", range(6))
def test_slope_identities(seed):
    data = random_data(seed, 16, 6)
    tau, lam = 0.35, 5.0
    full = full_fit_at(data, tau, lam)
    cfg = FitConfig(tau, lam)
    E = list(full.partition.elbow)
    gram = gram_inverse_init(data.Xtilde[E], E)
    r1 = data.y - full.beta0 - data.X @ full.beta
    for istar in [i for i in range(data.n) if i not in E][:4]:
        b0, b, h = slopes(data, cfg, full.partition, istar, gram)
        c = tau - (1.0 if istar in full.partition.left else 0.0)
        assert abs(b.sum() + c) < 1e-12
        assert np.all(h[E] == 0)
        # finite difference of oracle residuals, scaled by lam
        s = oracle_solve(data, cfg, 1 - 1e-4, istar)
        fd = lam * (data.y - s.beta0 - data.X @ s.beta - r1) / -1e-4
        assert np.allclose(h, fd, atol=1e-6)
        if len(E) < data.p + 1:
            assert h[istar] < 0 if istar in full.partition.right else h[istar] > 0
        else:
            assert np.allclose(h, 0, atol=1e-12)  # a full elbow pins the fit


def test_slopes_rejects_elbow_case():
    data = random_data(0, 16, 3)
    cfg = FitConfig(0.5, 1.0)
    full = full_fit_at(data, 0.5, 1.0)
    E = list(full.partition.elbow)
    with pytest.raises(ValidationError):
        slopes(data, cfg, full.partition, E[0], gram_inverse_init(data.Xtilde[E], E))


@pytest.mark.parametrize("seed,tau,lam", [(0, 0.5, 1.0), (1, 0.1, 0.05), (2, 0.9, 20.0),
                                          (3, 0.3, 0.5)])
def test_terminal_matches_deleted_refit(seed, tau, lam):
    data = random_data(seed, 14, 3)
    for istar in range(data.n):
        cfg, full, path = walk(data, tau, lam, istar)
        ref = oracle_solve(data, cfg, 0.0, istar)
        assert np.max(np.abs(path.terminal.coef - ref.coef)) < 1e-6
        assert kkt_residual(path.terminal, data, cfg) <= 1e-8 * data.scale


def test_endpoints_and_midpoint_objective():
    data = random_data(4, 15, 3)
    cfg, full, path = walk(data, 0.4, 1.0, 5)
    assert eval_at(path, 1.0) is path.initial and eval_at(path, 0.0) is path.terminal
    for seg in path.segments:
        w = 0.5 * (seg.omega_hi + seg.omega_lo)
        s = eval_at(path, w)
        ref = oracle_solve(data, cfg, w, 5)
        assert objective(data, cfg, w, 5, s.beta0, s.beta) == pytest.approx(
            objective(data, cfg, w, 5, ref.beta0, ref.beta), abs=1e-8)
    with pytest.raises(ValidationError):
        eval_at(path, 1.5)


@pytest.mark.parametrize("seed", range(5))
def test_piecewise_linear_and_kkt(seed):
    data = random_data(10 + seed, 20, 4)
    rng = np.random.default_rng(seed)
    for istar in range(0, data.n, 3):
        cfg, full, path = walk(data, 0.5, 0.5, istar)
        ks = path.breakpoints
        assert all(a > b for a, b in zip(ks, ks[1:]))
        for seg in path.segments:
            hi, lo = seg.omega_hi, seg.omega_lo
            a, b = eval_at(path, hi), seg.solution_at(lo, cfg.lam)
            for al in (0.25, 0.5, 0.75):
                m = eval_at(path, lo + al * (hi - lo)) if lo + al * (hi - lo) > 0 else None
                if m is None:
                    continue
                lin = (1 - al) * b.coef + al * a.coef
                assert np.max(np.abs(m.coef - lin)) < 1e-10 * max(1, np.abs(lin).max())
            for w in lo + rng.uniform(size=5) * (hi - lo):
                if w > 0:
                    assert kkt_residual(eval_at(path, w), data, cfg) <= 1e-8 * data.scale
            assert len(seg.partition.elbow) <= min(data.p + 1, data.n)


def test_starred_case_never_reenters():
    data = random_data(7, 25, 5)
    for istar in range(data.n):
        _, _, path = walk(data, 0.5, 0.2, istar)
        inside = [istar in s.partition.elbow for s in path.segments]
        if False in inside:
            assert not any(inside[inside.index(False):])


def test_part_two_hold_then_leave():
    data = random_data(8, 20, 3)
    tau, lam = 0.3, 1.0
    full = full_fit_at(data, tau, lam)
    istar = full.partition.elbow[0]
    t = full.theta[istar]
    cfg, _, path = walk(data, tau, lam, istar)
    w1 = t / (tau - (1.0 if t < 0 else 0.0))
    assert path.breakpoints[1] == pytest.approx(w1, abs=1e-12)
    mid = eval_at(path, 0.5 * (1 + w1))
    assert np.allclose(mid.coef, full.coef, atol=1e-12)
    after = path.segments[1].partition
    assert istar in (after.right if t > 0 else after.left)


def test_first_event_matches_oracle_sweep():
    data = random_data(21, 15, 3)
    tau, lam = 0.5, 1.0
    for istar in range(data.n):
        cfg, full, path = walk(data, tau, lam, istar)
        if istar in full.partition.elbow or path.n_breakpoints == 0:
            continue
        w1 = path.breakpoints[1]
        if w1 < 3e-3 or (len(path.breakpoints) > 2 and w1 - path.breakpoints[2] < 3e-3):
            continue
        parts = []
        for w in (w1 + 1e-3, w1 - 1e-3):
            s = oracle_solve(data, cfg, w, istar)
            parts.append(partition_from_residuals(data.y - s.beta0 - data.X @ s.beta,
                                                  1e-7, data.scale))
        changed = {i for i in range(data.n)
                   if parts[0].status()[i] != parts[1].status()[i]}
        seg0, seg1 = path.segments[0].partition, path.segments[1].partition
        expected = {i for i in range(data.n) if seg0.status()[i] != seg1.status()[i]}
        assert changed == expected and len(expected) == 1
        return
    pytest.fail("no usable instance")


def test_store_false_keeps_terminal():
    data = random_data(9, 12, 2)
    cfg = FitConfig(0.5, 1.0)
    full = full_fit_at(data, 0.5, 1.0)
    a = build_omega_path(data, cfg, 3, full)
    b = build_omega_path(data, cfg, 3, full, check=False, store=False)
    assert np.allclose(a.terminal.coef, b.terminal.coef, atol=1e-14)
    assert a.n_breakpoints == b.n_breakpoints and not b.segments
