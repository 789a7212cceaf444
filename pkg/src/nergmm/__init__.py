"""Non-ergodic ground-motion modelling: ergodic backbone regression,
spatially varying coefficients, cell-specific anelastic attenuation,
and closed-form conditional prediction."""

import logging

from .bundle import load_bundle, save_bundle
from .catalog import Catalog, Record, Scenario, validate_catalog
from .cells import (CellGrid, PathSegments, assemble_dR, read_grid,
                    segment_path, write_grid)
from .errors import (ConstraintError, ConvergenceError, HyperparameterError,
                     ModelQualityWarning, NumericalError, OutOfGridError,
                     ValidationError)
from .ergodic import (ErgodicFit, ErgodicFitConfig, fit_ergodic, fit_partial,
                      loglik_ergodic, partition_residuals)
from .estimators import ErgodicGmm, NonErgodicGmm
from .gmm import ErgodicCoeffs, apply_full_saturation, design_matrix, f_erg
from .kernels import Kernel, KernelSum, kernel_matrix, sum_kernels
from .nonergodic import (Hyperparameters, ModelSpec, NergConfig, NergFit,
                         TermSpec, decompose, default_model_spec, fit_nerg,
                         marginal_loglik)
from .predict import (CoeffPrediction, GmPrediction, predict_coeffs,
                      predict_coeffs_fixed, predict_gm, sample_coeff_fields)
from .synth import GroundTruth, SynthConfig, generate, oracle_condition

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "Catalog", "Record", "Scenario", "validate_catalog",
    "CellGrid", "PathSegments", "segment_path", "assemble_dR",
    "read_grid", "write_grid",
    "ErgodicCoeffs", "apply_full_saturation", "design_matrix", "f_erg",
    "Kernel", "KernelSum", "kernel_matrix", "sum_kernels",
    "ErgodicFit", "ErgodicFitConfig", "fit_ergodic", "fit_partial",
    "loglik_ergodic", "partition_residuals",
    "TermSpec", "ModelSpec", "Hyperparameters", "NergConfig", "NergFit",
    "default_model_spec", "fit_nerg", "marginal_loglik", "decompose",
    "CoeffPrediction", "GmPrediction", "predict_coeffs",
    "predict_coeffs_fixed", "predict_gm", "sample_coeff_fields",
    "SynthConfig", "GroundTruth", "generate", "oracle_condition",
    "ErgodicGmm", "NonErgodicGmm",
    "save_bundle", "load_bundle",
    "ValidationError", "ConstraintError", "HyperparameterError",
    "OutOfGridError", "NumericalError", "ConvergenceError",
    "ModelQualityWarning",
]
