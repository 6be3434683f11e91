"""Two-stage sparse regression: Lasso screening, penalized refitting and
permutation-based cleaning, with a simulation harness for comparing them.

Typical use::

    from twostage import Dataset, ScreenCleanConfig, screen_and_clean
    result = screen_and_clean(Dataset(X, y), ScreenCleanConfig(seed=1))
    result.clean.discoveries
"""

from .dataset import Dataset, read_dataset_csv, write_dataset_csv
from .estimation import EstimationConfig, EstimationResult, estimate, prediction_error
from .inference import (
    CleanResult,
    ScreenCleanConfig,
    ScreenCleanResult,
    clean,
    permutation_f_test,
    screen,
    screen_and_clean,
    split_half,
    standard_f_pvalue,
    standard_t_pvalue,
    univariate_pvalues,
)
from .lasso import cv_select, lambda_grid, lambda_max, lasso_fit, lasso_path
from .linalg import SingularSystemError, gram_inverse, inverse_downdate, permuted_refits, solve_penalized
from .penalized import adaptive_weights, second_stage_fit
from .simulation import DesignSpec, run_experiment, simulate
from .stats import bh_adjust, bh_reject, fdp_sen, sen_fdr_curve

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "read_dataset_csv",
    "write_dataset_csv",
    "EstimationConfig",
    "EstimationResult",
    "estimate",
    "prediction_error",
    "CleanResult",
    "ScreenCleanConfig",
    "ScreenCleanResult",
    "clean",
    "permutation_f_test",
    "screen",
    "screen_and_clean",
    "split_half",
    "standard_f_pvalue",
    "standard_t_pvalue",
    "univariate_pvalues",
    "cv_select",
    "lambda_grid",
    "lambda_max",
    "lasso_fit",
    "lasso_path",
    "SingularSystemError",
    "gram_inverse",
    "inverse_downdate",
    "permuted_refits",
    "solve_penalized",
    "adaptive_weights",
    "second_stage_fit",
    "DesignSpec",
    "run_experiment",
    "simulate",
    "bh_adjust",
    "bh_reject",
    "fdp_sen",
    "sen_fdr_curve",
]
