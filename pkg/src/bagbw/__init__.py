"""Bagged cross-validation bandwidth selection for Nadaraya-Watson regression."""

__version__ = "0.1.0"

from .asymptotics import (
    AsymptoticConstants,
    ModelSpec,
    amse_bagged,
    compute_constants,
    estimate_r0,
    r0_variance_criterion,
)
from .bagging import BaggedResult, BaggingConfig, bagged_bandwidth, draw_subsample, rescale_bandwidth
from .binning import BinnedData, bin_linear, binned_cv_objective, binned_nw
from .cv import CvCurve, SearchConfig, cv_bandwidth, cv_modified_objective, cv_objective, select_bandwidth
from .estimator import Dataset, FittedCurve, ecdf_transform, fit_curve, nw_estimate, nw_loo
from .kernel import KernelSpec, gaussian_kernel, scaled_eval

__all__ = [
    "AsymptoticConstants",
    "BaggedResult",
    "BaggingConfig",
    "BinnedData",
    "CvCurve",
    "Dataset",
    "FittedCurve",
    "KernelSpec",
    "ModelSpec",
    "SearchConfig",
    "amse_bagged",
    "bagged_bandwidth",
    "bin_linear",
    "binned_cv_objective",
    "binned_nw",
    "compute_constants",
    "cv_bandwidth",
    "cv_modified_objective",
    "cv_objective",
    "draw_subsample",
    "ecdf_transform",
    "estimate_r0",
    "fit_curve",
    "gaussian_kernel",
    "nw_estimate",
    "nw_loo",
    "r0_variance_criterion",
    "rescale_bandwidth",
    "scaled_eval",
    "select_bandwidth",
]
