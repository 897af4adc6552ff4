"""Dynamic stochastic blockmodels tracked by an extended Kalman filter."""

__version__ = "0.1.0"

from .aposteriori import SearchConfig, fit_sequence, fit_step, local_search, log_posterior
from .ekf import (
    FilterState,
    ObsNoise,
    StateSpaceConfig,
    build_process_cov,
    fit_hyperparams,
    predict,
    run_filter,
    second_order_diagnostic,
    update,
)
from .estimators import AposterioriEKF, AprioriEKF, BlendedLinkPredictor, EWMALinkPredictor, SpectralSSBM
from .exceptions import (
    ConfigurationError,
    DegenerateBlockError,
    DimensionError,
    DynSBMError,
    InvalidAssignmentError,
    NumericalFailureError,
    ParseError,
    UndefinedMetricError,
)
from .linkpred import auc, blend, block_predict, ewma_predict
from .metrics import adjusted_rand, tracking_mse
from .netcore import BlockStats, ClassAssignment, Snapshot, block_counts, unvec, vec
from .pforacle import pf_filter
from .simgen import GroundTruth, SimParams, generate
from .ssbm import spectral_init, ssbm_loglikelihood, ssbm_mle

__all__ = [
    "__version__",
    "AposterioriEKF",
    "AprioriEKF",
    "BlendedLinkPredictor",
    "BlockStats",
    "ClassAssignment",
    "ConfigurationError",
    "DegenerateBlockError",
    "DimensionError",
    "DynSBMError",
    "EWMALinkPredictor",
    "FilterState",
    "GroundTruth",
    "InvalidAssignmentError",
    "NumericalFailureError",
    "ObsNoise",
    "ParseError",
    "SearchConfig",
    "SimParams",
    "Snapshot",
    "SpectralSSBM",
    "StateSpaceConfig",
    "UndefinedMetricError",
    "adjusted_rand",
    "auc",
    "blend",
    "block_counts",
    "block_predict",
    "build_process_cov",
    "ewma_predict",
    "fit_hyperparams",
    "fit_sequence",
    "fit_step",
    "generate",
    "local_search",
    "log_posterior",
    "pf_filter",
    "predict",
    "run_filter",
    "second_order_diagnostic",
    "spectral_init",
    "ssbm_loglikelihood",
    "ssbm_mle",
    "tracking_mse",
    "unvec",
    "update",
    "vec",
]
