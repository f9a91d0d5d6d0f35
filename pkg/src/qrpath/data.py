"""Simulation design and CSV interchange.

``simulate`` draws from numpy's Philox4x64-10 counter-based generator in a
fixed order: the ``n x p`` design row by row, then ``(beta0, beta_1..beta_p)``,
then the ``n`` errors, all standard normal.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Dataset
from .exceptions import DataFormatError, ValidationError

GENERATOR = "numpy.random.Philox (Philox4x64-10) + Generator.standard_normal"
DRAW_ORDER = ["X (n x p, row-major)", "beta (p + 1, intercept first)", "eps (n)"]
SIM_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SimSpec:
    n: int
    p: int
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "p", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ValidationError(f"{name} must be an integer, got {v!r}")
        if self.n < 2 or self.p < 1:
            raise ValidationError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if not (0 <= self.seed < 2 ** 64):
            raise ValidationError("seed must be a 64-bit unsigned integer")


def simulate(spec: SimSpec, return_coef: bool = False):
    """Standard linear model with all ingredients i.i.d. N(0, 1)."""
    rng = np.random.Generator(np.random.Philox(int(spec.seed)))
    X = rng.standard_normal((spec.n, spec.p))
    coef = rng.standard_normal(spec.p + 1)
    eps = rng.standard_normal(spec.n)
    y = coef[0] + X @ coef[1:] + eps
    data = Dataset(X, y)
    return (data, coef) if return_coef else data


def sim_metadata(spec: SimSpec) -> dict:
    return {
        "format_version": SIM_FORMAT_VERSION,
        "spec": asdict(spec),
        "generator": GENERATOR,
        "numpy_version": np.__version__,
        "draw_order": DRAW_ORDER,
        "model": "y = beta0 + X beta + eps",
    }


def write_metadata(spec: SimSpec, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(sim_metadata(spec), indent=2, sort_keys=True) + "\n")
    return path


def _fmt(v: float) -> str:
    # repr gives the shortest string that round-trips exactly
    return repr(float(v))


def write_csv(data: Dataset, path, names=None) -> Path:
    """Covariates ``x1..xp`` (or ``names``) followed by ``y``."""
    path = Path(path)
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(data.p)]
    if len(names) != data.p or "y" in names:
        raise ValidationError("need one covariate name per column, none of them 'y'")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["y"])
        for row, yi in zip(data.X, data.y):
            w.writerow([_fmt(v) for v in row] + [_fmt(yi)])
    return path


def read_csv(path) -> Dataset:
    """Read a headed CSV with a ``y`` column; every other column is a covariate."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, a header row is required")
        header = [h.strip() for h in header]
        if "y" not in header:
            raise DataFormatError(f"{path}: missing response column 'y' in header {header}")
        if header.count("y") > 1:
            raise DataFormatError(f"{path}: column 'y' appears more than once")
        iy = header.index("y")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(rec)} fields, header has {len(header)}")
            vals = []
            for j, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {j + 1} ('{header[j]}'): "
                        f"non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {j + 1} ('{header[j]}'): non-finite value")
                vals.append(v)
            rows.append(vals)
    if len(header) < 2:
        raise DataFormatError(f"{path}: need at least one covariate column besides 'y'")
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need at least two data rows")
    arr = np.array(rows)
    y = arr[:, iy]
    X = np.delete(arr, iy, axis=1)
    return Dataset(X, y)


def covariate_names(path) -> list:
    with Path(path).open(newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh))]
    return [h for h in header if h != "y"]
