from .cv import (
    DEFAULT_GBT_GRID,
    DEFAULT_GRIDS,
    DEFAULT_SVR_GRID,
    CVResult,
    FoldError,
    GridResult,
    fit_gbt,
    grid_search,
    kfold_cv,
    kfold_indices,
    learner_for,
)
from .features import FeatureMatrix
from .model import (
    KINDS,
    EnsembleError,
    EnsembleModel,
    fit,
    fit_equal_weight,
    fit_gbt_fixed,
    fit_linear,
    fit_majority,
    fit_perf_weight,
    fit_svr,
)
from .svr import ConvergenceError, rbf_kernel
from .voting import equal_weights, majority_vote, perf_weights, weighted_average

__all__ = [
    "DEFAULT_GBT_GRID", "DEFAULT_GRIDS", "DEFAULT_SVR_GRID", "KINDS", "CVResult", "ConvergenceError",
    "EnsembleError", "EnsembleModel", "FeatureMatrix", "FoldError", "GridResult", "equal_weights", "fit",
    "fit_equal_weight", "fit_gbt", "fit_gbt_fixed", "fit_linear", "fit_majority", "fit_perf_weight",
    "fit_svr", "grid_search", "kfold_cv", "kfold_indices", "learner_for", "majority_vote",
    "perf_weights", "rbf_kernel", "weighted_average",
]
