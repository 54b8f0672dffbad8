"""Least-squares piecewise linear approximation: exact oracles, lattice
neural networks, and executable optimality conditions."""

from .core import (
    CATALOG, ContractError, Dataset, DomainError, EvaluationError, Interval, PwlaError, PwlModel, Segment,
    TargetFunction, eval_pwl, get_function, load_csv, load_model, make_grid, mse, save_csv, save_model, sse,
)
from .linfit import CpwlFit, IllPosedError, fit_cpwl_fixed, fit_line, residual_moments
from .lnn import LnnParams, TrainConfig, lnn_backward, lnn_forward, to_pwl, train
from .oracle import DeConfig, InfeasibleError, grid_optima, solve_cpwla_de, solve_cpwla_scan, solve_pwla_dp
from .refine import chord_cost, prune, refine_pipeline
from .theorems import OptimalityReport, check_monotonicity, check_theorem1, check_theorem2

__version__ = "0.1.0"
