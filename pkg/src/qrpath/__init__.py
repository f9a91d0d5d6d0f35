"""Exact solution paths for ridge-penalised quantile regression.

Penalty paths, case-weight paths, exact leave-one-out CV, case-influence
graphs and case-weight degrees of freedom.
"""

__version__ = "0.1.0"

from .core import Dataset, FitConfig, QuantileSolution, check_loss, kkt_residual, objective
from .cv import CvCurve, exact_loo_cv, flip_analysis, gacv_score, loo_at
from .data import SimSpec, read_csv, simulate, write_csv
from .diagnostics import (df_qr, df_ridge, influence_graph_qr, influence_graph_ridge,
                          ridge_hat)
from .estimators import QuantileRidge, QuantileRidgeLOOCV
from .exceptions import (DataFormatError, KKTCertificateError, OracleFailure,
                         PathDivergenceError, QRPathError, SingularElbowError,
                         ValidationError)
from .lambda_path import build_lambda_path
from .omega_path import build_omega_path
from .oracle import brute_force_loo, oracle_solve

__all__ = [
    "Dataset", "FitConfig", "QuantileSolution", "check_loss", "kkt_residual", "objective",
    "CvCurve", "exact_loo_cv", "flip_analysis", "gacv_score", "loo_at",
    "SimSpec", "read_csv", "simulate", "write_csv",
    "df_qr", "df_ridge", "influence_graph_qr", "influence_graph_ridge", "ridge_hat",
    "QuantileRidge", "QuantileRidgeLOOCV",
    "DataFormatError", "KKTCertificateError", "OracleFailure", "PathDivergenceError",
    "QRPathError", "SingularElbowError", "ValidationError",
    "build_lambda_path", "build_omega_path", "brute_force_loo", "oracle_solve",
]
