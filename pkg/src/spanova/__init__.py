"""Tensor-product smoothing spline regression for large samples.

Penalized least-squares fitting of smoothing-spline analysis-of-variance
models with a reduced-rank random basis, and four strategies for choosing
the smoothing parameters: full iterative cross-validation, the one-shot
skip initialization, the order-based rate law, and subsample extrapolation
(uniform or multi-size asymptotic sampling).
"""

from .asp import (
    AspConfig,
    RateFit,
    SelectionResult,
    SubsampleFit,
    asp_asymptotic,
    asp_uniform,
    estimate_p,
    extrapolate_lambda,
    fit_rate,
    full_sample_basis,
    gcv_select,
    order_based,
    order_selection,
    rate_exponent,
    skip_selection,
    subsample_size,
)
from .data import Dataset, unit_domains
from .gcv import GcvResult, full_gcv, gcv_score, minimize_lambda, skip_select
from .kernels import (
    AnovaTerm,
    ModelSpec,
    PredictorDomain,
    build_model,
    enumerate_terms,
    eval_bernoulli,
    full_two_way_model,
    main_effects_model,
    null_basis_matrix,
    term_gram,
    term_kernel,
)
from .simulate import (
    SCENARIOS,
    BenchRecord,
    OracleResult,
    Scenario,
    SimulatedData,
    analytic_lambda_periodic,
    gen_data,
    loss,
    oracle_lambda,
    oracle_lambda_midgrid,
    relative_efficacy,
    run_benchmark,
    scenario_eval,
)
from .solver import (
    BasisSelection,
    DesignBlocks,
    FitResult,
    SmoothingParams,
    assemble_blocks,
    basis_count,
    demmler_reinsch,
    fit_model,
    hat_trace,
    predict,
    select_basis,
    solve_penalized,
)
from .util import InputError, NumericalError, SpanovaError

__version__ = "1.0.0"

__all__ = [
    "AnovaTerm",
    "AspConfig",
    "BasisSelection",
    "BenchRecord",
    "Dataset",
    "DesignBlocks",
    "FitResult",
    "GcvResult",
    "InputError",
    "ModelSpec",
    "NumericalError",
    "OracleResult",
    "PredictorDomain",
    "RateFit",
    "SCENARIOS",
    "Scenario",
    "SelectionResult",
    "SimulatedData",
    "SmoothingParams",
    "SpanovaError",
    "SubsampleFit",
    "analytic_lambda_periodic",
    "asp_asymptotic",
    "asp_uniform",
    "assemble_blocks",
    "basis_count",
    "build_model",
    "demmler_reinsch",
    "enumerate_terms",
    "estimate_p",
    "eval_bernoulli",
    "extrapolate_lambda",
    "fit_model",
    "fit_rate",
    "full_gcv",
    "full_sample_basis",
    "full_two_way_model",
    "gcv_score",
    "gcv_select",
    "gen_data",
    "hat_trace",
    "loss",
    "main_effects_model",
    "minimize_lambda",
    "null_basis_matrix",
    "oracle_lambda",
    "oracle_lambda_midgrid",
    "order_based",
    "order_selection",
    "predict",
    "rate_exponent",
    "relative_efficacy",
    "run_benchmark",
    "scenario_eval",
    "select_basis",
    "skip_select",
    "skip_selection",
    "solve_penalized",
    "subsample_size",
    "term_gram",
    "term_kernel",
    "unit_domains",
]
