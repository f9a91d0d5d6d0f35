"""Command-line interface: ``qrpath {simulate,fit,cv,influence,df,bench}``.

Every run writes a JSON report (``report.json`` in the output directory unless
``--report`` says otherwise) listing the configuration, per-phase timings,
produced files and warnings; it is written even when the command fails. Case
indices are 0-based.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .core import Dataset, FitConfig, check_loss, kkt_residual
from .data import SimSpec, read_csv, simulate, write_csv, write_metadata
from .exceptions import QRPathError, ValidationError
from .parallel import resolve_threads

EXIT_CODES = {
    "internal": 1,
    "invalid-input": 2,
    "data-format": 3,
    "singular-elbow": 4,
    "path-divergence": 5,
    "kkt-certificate": 6,
    "oracle-failure": 7,
    "verification-failed": 8,
}


class VerificationFailed(QRPathError):
    category = "verification-failed"


class _Collector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(record.getMessage())


class Run:
    """Accumulates the run report."""

    def __init__(self, command, args):
        self.command = command
        self.config = {k: v for k, v in vars(args).items() if k not in ("func",)}
        self.timings = {}
        self.outputs = []
        self.warnings = []
        self.summary = {}
        self.out = Path(args.out)

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)

    def path(self, name) -> Path:
        return self.out / name

    def wrote(self, p):
        self.outputs.append(str(p))

    def warn(self, msg):
        self.warnings.append(msg)

    def report(self, status, error=None):
        rep = {
            "command": self.command,
            "version": __version__,
            "status": status,
            "config": self.config,
            "timings": self.timings,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "summary": self.summary,
        }
        if error is not None:
            rep["error"] = error
        return rep


def _fmt(v):
    return repr(float(v))


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _parse_kv(text, keys):
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise ValidationError(f"expected key=value pairs like n=50,p=30, got {text!r}")
        k, v = part.split("=", 1)
        k = k.strip()
        if k not in keys:
            raise ValidationError(f"unknown key {k!r} in {text!r} (allowed: {', '.join(keys)})")
        try:
            out[k] = int(v)
        except ValueError:
            raise ValidationError(f"{k} must be an integer, got {v!r}")
    missing = [k for k in keys if k not in out and k != "seed"]
    if missing:
        raise ValidationError(f"missing {', '.join(missing)} in {text!r}")
    return out


def _load(args, run) -> Dataset:
    if getattr(args, "data", None) and getattr(args, "simulate", None):
        raise ValidationError("--data and --simulate are mutually exclusive")
    if getattr(args, "data", None):
        return read_csv(args.data)
    if getattr(args, "simulate", None):
        kv = _parse_kv(args.simulate, ("n", "p", "seed"))
        return simulate(SimSpec(kv["n"], kv["p"], kv.get("seed", args.seed)))
    raise ValidationError("an input is required: --data FILE or --simulate n=..,p=..")


def _float_list(text, name):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"--{name} must be a comma-separated list of numbers, got {text!r}")


def _cases(text, n):
    if text == "all":
        return list(range(n))
    try:
        cases = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"--cases must be 'all' or comma-separated integers, got {text!r}")
    bad = [c for c in cases if not 0 <= c < n]
    if bad:
        raise ValidationError(f"case index out of range [0, {n}): {bad}")
    return cases


# ---------------------------------------------------------------- commands

def cmd_simulate(args, run):
    spec = SimSpec(args.n, args.p, args.seed)
    with run.phase("simulate"):
        data = simulate(spec)
    p = write_csv(data, run.path(args.name + ".csv"))
    run.wrote(p)
    run.wrote(write_metadata(spec, run.path(args.name + ".meta.json")))
    run.summary = {"n": data.n, "p": data.p}


def cmd_fit(args, run):
    from .lambda_path import full_fit_at
    from .oracle import oracle_solve

    data = _load(args, run)
    cfg = FitConfig(args.tau, args.lam)
    with run.phase("fit"):
        sol = full_fit_at(data, cfg.tau, cfg.lam)
    cert = kkt_residual(sol, data, cfg)
    out = {
        "tau": cfg.tau, "lambda": cfg.lam, "n": data.n, "p": data.p,
        "intercept": sol.beta0, "coef": sol.beta.tolist(), "dual": sol.theta.tolist(),
        "partition": {"elbow": list(sol.partition.elbow), "left": list(sol.partition.left),
                      "right": list(sol.partition.right)},
        "kkt_certificate": cert,
    }
    if args.verify:
        with run.phase("verify"):
            ref = oracle_solve(data, cfg)
        diff = float(np.max(np.abs(ref.beta - sol.beta)))
        out["oracle_max_coef_diff"] = diff
        if diff > 1e-6:
            raise VerificationFailed(f"fit differs from the oracle by {diff:.3g}")
    p = run.path("fit.json")
    p.write_text(json.dumps(out, indent=2) + "\n")
    run.wrote(p)
    run.summary = {"kkt_certificate": cert, "elbow_size": len(sol.partition.elbow)}
    if cert > 1e-8 * data.scale:
        raise QRPathError(f"KKT certificate {cert:.3g} above tolerance")


def _cv_grid(args, data):
    from .lambda_path import build_lambda_path, log_grid

    floor = 1e-4
    if (args.lambda_min is None) != (args.lambda_max is None):
        raise ValidationError("--lambda-min and --lambda-max must be given together")
    if args.n_lambda < 2:
        raise ValidationError("--n-lambda must be at least 2")
    if args.lambda_min is not None:
        if not 0 < args.lambda_min < args.lambda_max:
            raise ValidationError("need 0 < --lambda-min < --lambda-max")
        grid = log_grid(args.lambda_min, args.lambda_max, args.n_lambda)[::-1]
        return grid, build_lambda_path(data, args.tau, float(grid[-1]))
    path = build_lambda_path(data, args.tau, floor)
    from .lambda_path import lambda_grid

    return lambda_grid(path, args.n_lambda, floor)[::-1], path


def cmd_cv(args, run):
    from .cv import exact_loo_cv

    data = _load(args, run)
    FitConfig(args.tau, 1.0)
    threads = resolve_threads(args.threads)
    with run.phase("lambda_path"):
        grid, path = _cv_grid(args, data)
    with run.phase("cv"):
        curve = exact_loo_cv(data, args.tau, grid, threads=threads, path=path)
    p = run.path("cv_curve.csv")
    _write_rows(p, ["lambda", "rcv", "gacv", "elbow_size"],
                [(l, r, g, int(e)) for l, r, g, e in
                 zip(curve.lambdas, curve.rcv, curve.gacv, curve.elbow_sizes)])
    run.wrote(p)
    run.summary = {"argmin_rcv": curve.argmin_rcv, "argmin_gacv": curve.argmin_gacv,
                   "n_lambda": int(len(grid)), "threads": threads}
    if args.verify:
        from .oracle import BRUTE_FORCE_CAP, brute_force_loo

        if data.n > BRUTE_FORCE_CAP:
            raise ValidationError(f"--verify needs n <= {BRUTE_FORCE_CAP}")
        with run.phase("verify"):
            worst = 0.0
            for lam, rcv in zip(curve.lambdas, curve.rcv):
                ref = np.mean(check_loss(data.y - brute_force_loo(data, args.tau, lam), args.tau))
                worst = max(worst, abs(ref - rcv))
        run.summary["verify_max_rcv_diff"] = worst
        if worst > 1e-8:
            raise VerificationFailed(f"RCV differs from brute force by {worst:.3g}")
    if args.plot:
        from .svg import Chart, Series

        ch = Chart(f"Exact LOO CV and GACV (tau={args.tau:g})", "lambda", "score", logx=True)
        ch.add(Series("RCV (exact LOO)", curve.lambdas, curve.rcv))
        ch.add(Series("GACV", curve.lambdas, curve.gacv))
        ch.vlines = [(curve.argmin_rcv, "argmin RCV", "#1f77b4"),
                     (curve.argmin_gacv, "argmin GACV", "#d62728")]
        p = run.path("cv_curve.svg")
        p.write_text(ch.render())
        run.wrote(p)


def cmd_influence(args, run):
    from .diagnostics import influence_graph_qr, influence_graph_ridge, ridge_fit
    from .lambda_path import full_fit_at
    from .omega_path import build_omega_path

    data = _load(args, run)
    cases = _cases(args.cases, data.n)
    grid = np.linspace(1.0, 0.0, 101)
    rows = []
    curves = {}
    if args.model == "ridge":
        if not args.lam >= 0:
            raise ValidationError("--lambda must be nonnegative")
        with run.phase("influence"):
            c = ridge_fit(data, args.lam)
            resid = data.y - data.Xtilde @ c
            for i in cases:
                g = influence_graph_ridge(data, args.lam, i)
                vals = g(grid)
                rows += [(i, float(w), float(v)) for w, v in zip(grid, vals)]
                curves[i] = (grid, vals)
    else:
        cfg = FitConfig(args.tau, args.lam)
        with run.phase("fit"):
            full = full_fit_at(data, cfg.tau, cfg.lam)
        resid = data.y - full.beta0 - data.X @ full.beta
        with run.phase("influence"):
            for i in cases:
                path = build_omega_path(data, cfg, i, full)
                g = influence_graph_qr(path, data, cfg)
                om = np.unique(np.concatenate([g.knots, grid]))[::-1]
                vals = g(om)
                rows += [(i, float(w), float(v)) for w, v in zip(om, vals)]
                curves[i] = (om, vals)
                if path.jumps:
                    run.warn(f"case {i}: intercept re-anchored on a flat optimum at "
                             f"omega={path.jumps}")
    p = run.path("influence.csv")
    _write_rows(p, ["case", "omega", "d_tilde"], rows)
    run.wrote(p)
    order = np.argsort(resid[cases])
    extremes = {cases[int(order[0])], cases[int(order[-1])]}
    run.summary = {"model": args.model, "cases": len(cases),
                   "extreme_residual_cases": sorted(int(e) for e in extremes)}
    if args.plot:
        from .svg import Chart, Series

        ch = Chart(f"Case influence ({args.model}, lambda={args.lam:g})", "case weight omega",
                   "rescaled distance")
        for i in cases:
            w, v = curves[i]
            hi = i in extremes
            ch.add(Series(f"case {i} ({'max' if resid[i] > 0 else 'min'} residual)" if hi else f"case {i}",
                          w, v, color="#d62728" if hi else "#7f7f7f", width=2.2 if hi else 0.8,
                          opacity=1.0 if hi else 0.5, legend=hi))
        p = run.path("influence.svg")
        p.write_text(ch.render())
        run.wrote(p)


def cmd_df(args, run):
    from .diagnostics import df_qr, df_ridge, ridge_hat

    data = _load(args, run)
    omegas = _float_list(args.omegas, "omegas")
    for w in omegas:
        if not 0 <= w < 1:
            raise ValidationError(f"df weights must lie in [0, 1), got {w}")
    rows = []
    with run.phase("df"):
        if args.model == "ridge":
            if not args.lam >= 0:
                raise ValidationError("--lambda must be nonnegative")
            trace = float(np.trace(ridge_hat(data, args.lam)[1]))
            run.summary["trace_hat"] = trace
            ests = [df_ridge(data, args.lam, w) for w in omegas]
        else:
            from .lambda_path import full_fit_at

            FitConfig(args.tau, args.lam)
            full = full_fit_at(data, args.tau, args.lam)
            run.summary["elbow_size"] = len(full.partition.elbow)
            ests = [df_qr(data, args.tau, args.lam, w, full) for w in omegas]
    for e in ests:
        rows.append((e.omega, e.value, e.excluded))
        if e.excluded:
            run.warn(f"df at omega={e.omega!r}: {e.excluded} summand(s) excluded "
                     "(near-zero denominator)")
    p = run.path("df.csv")
    _write_rows(p, ["omega", "df", "excluded"], rows)
    run.wrote(p)
    run.summary.update({"model": args.model, "values": [e.value for e in ests]})


def _grid_entries(text):
    entries = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) != 3:
            raise ValidationError(f"grid entries are n:p:tau, got {part!r}")
        try:
            entries.append((int(bits[0]), int(bits[1]), float(bits[2])))
        except ValueError:
            raise ValidationError(f"cannot parse grid entry {part!r}")
    return entries


def cmd_bench(args, run):
    from .bench import BenchRow, check_entry, mean_se, run_replicate

    entries = _grid_entries(args.grid)
    for n, p, tau in entries:
        reason = check_entry(n, p, tau, args.baseline)
        if reason:
            raise ValidationError(f"grid entry {n}:{p}:{tau} rejected: {reason}")
    if args.lambda_range in ("table", "auto"):
        lrange = args.lambda_range
    else:
        lo, hi = _float_list(args.lambda_range, "lambda-range")
        lrange = (lo, hi)
    rows, summary = [], []
    for n, p, tau in entries:
        reps = []
        with run.phase(f"{n}:{p}:{tau}"):
            for r in range(args.replicates):
                reps.append(run_replicate(n, p, tau, r, args.seed + r, args.n_lambda,
                                          args.baseline, lrange, args.inner))
        rows += reps
        m, se = mean_se([x.mean_breakpoints for x in reps])
        summary.append({"n": n, "p": p, "tau": tau, "mean_breakpoints": m, "se": se,
                        "omega_sec_per_case": float(np.mean([x.omega_sec_per_case for x in reps])),
                        "lambda_sec_per_case": float(np.mean([x.lambda_sec_per_case for x in reps])),
                        "refit_sec_per_case": float(np.mean([x.refit_sec_per_case for x in reps]))})
    fields = list(BenchRow.__dataclass_fields__)
    p = run.path("bench.csv")
    _write_rows(p, fields, [[getattr(r, f) for f in fields] for r in rows])
    run.wrote(p)
    p = run.path("bench_summary.csv")
    keys = list(summary[0]) if summary else []
    _write_rows(p, keys, [[s[k] for k in keys] for s in summary])
    run.wrote(p)
    run.summary = {"entries": summary}


# ---------------------------------------------------------------- parser

def _common(sp, data=True):
    sp.add_argument("--out", default=".", help="output directory (default: current)")
    sp.add_argument("--report", default=None, help="report path (default: OUT/report.json)")
    sp.add_argument("--seed", type=int, default=0, help="seed for --simulate and bench")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $QRPATH_THREADS or 1)")
    if data:
        sp.add_argument("--data", help="input CSV with a 'y' column")
        sp.add_argument("--simulate", metavar="n=N,p=P[,seed=S]",
                        help="use the standard-normal simulation design instead of a CSV")


def build_parser():
    ap = argparse.ArgumentParser(prog="qrpath", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qrpath {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw a dataset from the simulation design")
    _common(sp, data=False)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--name", default="data", help="output stem (default: data)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="exact fit at one (tau, lambda)")
    _common(sp)
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--verify", action="store_true", help="cross-check against the oracle")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="exact leave-one-out CV and GACV over a lambda grid")
    _common(sp)
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--n-lambda", type=int, default=50)
    sp.add_argument("--lambda-min", type=float, default=None)
    sp.add_argument("--lambda-max", type=float, default=None)
    sp.add_argument("--plot", action="store_true", help="also write cv_curve.svg")
    sp.add_argument("--verify", action="store_true", help="compare RCV with brute-force refits")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("influence", help="case-influence graphs")
    _common(sp)
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--model", choices=("qrrp", "ridge"), default="qrrp")
    sp.add_argument("--cases", default="all", help="'all' or comma-separated 0-based indices")
    sp.add_argument("--plot", action="store_true", help="also write influence.svg")
    sp.set_defaults(func=cmd_influence)

    sp = sub.add_parser("df", help="case-weight degrees of freedom")
    _common(sp)
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--model", choices=("qrrp", "ridge"), default="qrrp")
    sp.add_argument("--omegas", default="0,0.5,0.9")
    sp.set_defaults(func=cmd_df)

    sp = sub.add_parser("bench", help="breakpoint counts and LOO runtime per case")
    _common(sp, data=False)
    sp.add_argument("--grid", default="100:50:0.5", help="comma-separated n:p:tau triples")
    sp.add_argument("--n-lambda", type=int, default=50)
    sp.add_argument("--replicates", type=int, default=20)
    sp.add_argument("--baseline", choices=("omega", "lambda", "refit", "both"), default="omega",
                    help="omega/lambda: penalty path per case-deleted dataset; refit: oracle refits")
    sp.add_argument("--lambda-range", default="table",
                    help="'table' (0.01..100), 'auto' (breakpoint range) or LO,HI")
    sp.add_argument("--inner", type=int, default=3, help="timing repetitions (median)")
    sp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    collector = _Collector()
    logging.getLogger("qrpath").addHandler(collector)
    run = Run(args.command, args)
    status, error, code = "ok", None, 0
    try:
        run.out.mkdir(parents=True, exist_ok=True)
        if args.threads is not None:
            resolve_threads(args.threads)
        args.func(args, run)
    except QRPathError as exc:
        status, code = "error", EXIT_CODES.get(exc.category, 1)
        error = {"category": exc.category, "message": str(exc)}
    except OSError as exc:
        status, code = "error", EXIT_CODES["data-format"]
        error = {"category": "data-format", "message": str(exc)}
    except Exception as exc:  # report, then signal an internal error
        status, code = "error", EXIT_CODES["internal"]
        error = {"category": "internal", "message": f"{type(exc).__name__}: {exc}"}
    finally:
        logging.getLogger("qrpath").removeHandler(collector)
    run.warnings = collector.messages + run.warnings
    report_path = Path(args.report) if args.report else run.path("report.json")
    try:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(run.report(status, error), indent=2, default=str) + "\n")
    except OSError as exc:
        print(f"qrpath: cannot write report: {exc}", file=sys.stderr)
        code = code or EXIT_CODES["internal"]
    if error:
        print(f"qrpath {args.command}: {error['category']}: {error['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
