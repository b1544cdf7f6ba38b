"""latslr: lattice decoding problems reduced to sparse linear regression."""

from .clwe import (
    ClweSample,
    ClweSlrInstance,
    build_slr_from_clwe,
    distinguish,
    mod1,
    sample_clwe,
    sample_null,
)
from .gadgets import (
    GadgetShape,
    PartiteSparseVector,
    build_g_partite,
    build_g_sparse,
    decode_partite,
    encode_sign_vector,
    is_in_snk,
)
from .harness import ExperimentConfig, TrialRecord, emit_csv, emit_json, emit_plot_script, run_experiment
from .lattice import (
    BddSolveReport,
    BinaryBddInstance,
    LatticeBasis,
    babai_round,
    bdd_to_binary_gadget,
    lambda1_bin_exact,
    lambda1_exact,
    make_binary_bdd,
    sample_random_basis,
    verify_binary_bdd_solution,
)
from .reduction import (
    ReductionParams,
    ReductionTranscript,
    SlrInstance,
    build_slr_instance,
    column_normalize,
    estimate_lambda1_hat,
    extract_bdd_solution,
    flood_noise_instance,
    flooding_tv_bound,
    reduce_and_solve,
)
from .serialize import load_instance, save_instance
from .solvers import (
    LassoConfig,
    SolveResult,
    averaging_split_check,
    l0_bruteforce_general,
    l0_bruteforce_partite,
    lasso_coordinate_descent,
    lasso_lambda_floor,
    prediction_error,
    re_constant_estimate,
    residual_mse,
    threshold_topk,
    thresholded_lasso,
)

__version__ = "0.1.0"

__all__ = [
    "BddSolveReport",
    "BinaryBddInstance",
    "ClweSample",
    "ClweSlrInstance",
    "ExperimentConfig",
    "GadgetShape",
    "LassoConfig",
    "LatticeBasis",
    "PartiteSparseVector",
    "ReductionParams",
    "ReductionTranscript",
    "SlrInstance",
    "SolveResult",
    "TrialRecord",
    "averaging_split_check",
    "babai_round",
    "bdd_to_binary_gadget",
    "build_g_partite",
    "build_g_sparse",
    "build_slr_from_clwe",
    "build_slr_instance",
    "column_normalize",
    "decode_partite",
    "distinguish",
    "emit_csv",
    "emit_json",
    "emit_plot_script",
    "encode_sign_vector",
    "estimate_lambda1_hat",
    "extract_bdd_solution",
    "flood_noise_instance",
    "flooding_tv_bound",
    "is_in_snk",
    "l0_bruteforce_general",
    "l0_bruteforce_partite",
    "lambda1_bin_exact",
    "lambda1_exact",
    "lasso_coordinate_descent",
    "lasso_lambda_floor",
    "load_instance",
    "make_binary_bdd",
    "mod1",
    "prediction_error",
    "re_constant_estimate",
    "reduce_and_solve",
    "residual_mse",
    "run_experiment",
    "sample_clwe",
    "sample_null",
    "sample_random_basis",
    "save_instance",
    "threshold_topk",
    "thresholded_lasso",
    "verify_binary_bdd_solution",
]
