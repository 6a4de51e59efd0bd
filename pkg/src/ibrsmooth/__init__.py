"""Multivariate nonparametric regression by iterative bias reduction.

Fit a deliberately oversmoothed kernel or thin-plate-spline pilot, then
repeatedly smooth the residuals to strip its bias; stop the iteration where
generalized cross-validation is minimized.
"""

__version__ = "0.1.0"

from .data import Dataset, load_dataset
from .diagnostics import SpectrumReport, find_negative_triple, minor3_det, spectrum_report
from .engine import (
    BaseSpectrum,
    IbrFit,
    IbrPath,
    KernelBase,
    TpsBase,
    beta_at_k,
    bias_at_k,
    fit_ibr,
    fitted_at_k,
    gcv_score,
    iterate_naive,
    iteration_grid,
    predict,
    predict_many,
    run_path,
    select_k_gcv,
    spectrum_of,
)
from .exceptions import (
    CalibrationError,
    DivergenceError,
    ExtrapolationError,
    InputError,
    NumericalError,
    SmootherError,
)
from .functions import sim_function, wendelberger
from .harness import (
    SimConfig,
    SimResult,
    boston_study,
    generate_sample,
    load_boston,
    mse_against_truth,
    run_simulation,
)
from .kernels import (
    KernelSmoother,
    bandwidth_for_df,
    build_kernel_smoother,
    default_bandwidths,
    kernel_eval,
    weighted_distance,
)
from .tps import TpsSmoother, TpsSpec, build_tps_smoother, lambda_for_df, null_space_dim

__all__ = [
    "BaseSpectrum",
    "CalibrationError",
    "Dataset",
    "DivergenceError",
    "ExtrapolationError",
    "IbrFit",
    "IbrPath",
    "InputError",
    "KernelBase",
    "KernelSmoother",
    "NumericalError",
    "SimConfig",
    "SimResult",
    "SmootherError",
    "SpectrumReport",
    "TpsBase",
    "TpsSmoother",
    "TpsSpec",
    "bandwidth_for_df",
    "beta_at_k",
    "bias_at_k",
    "boston_study",
    "build_kernel_smoother",
    "build_tps_smoother",
    "default_bandwidths",
    "find_negative_triple",
    "fit_ibr",
    "fitted_at_k",
    "gcv_score",
    "generate_sample",
    "iterate_naive",
    "iteration_grid",
    "kernel_eval",
    "lambda_for_df",
    "load_boston",
    "load_dataset",
    "minor3_det",
    "mse_against_truth",
    "null_space_dim",
    "predict",
    "predict_many",
    "run_path",
    "run_simulation",
    "select_k_gcv",
    "sim_function",
    "spectrum_of",
    "spectrum_report",
    "weighted_distance",
    "wendelberger",
]
