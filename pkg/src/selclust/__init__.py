"""Selective inference for differences in means after hierarchical clustering."""

__version__ = "0.1.0"

from ._validation import ClusterPair, check_pair
from .core import contrast_vector, empirical_mean, perturbed_dataset, perturbed_dataset_cov, test_statistic
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateDirectionError,
    DegenerateSupportError,
    InvalidContrastError,
    InvalidPairError,
    NotPositiveDefiniteError,
    NumericalError,
    SelclustError,
    UnstableEstimateError,
)
from .hclust import HierarchicalClustering, Linkage, MergeHistory, cut_clusters, losing_pairs, run_agglomerative
from .inference import (
    ClusterMeanTest,
    TestResult,
    TruncatedChi,
    estimate_sigma,
    selective_p_cov,
    selective_p_exact,
    selective_p_importance,
    selective_p_plugin,
    truncated_chi_survival,
    wald_p,
    wald_p_cov,
)
from .intervals import Interval, IntervalSet, intersect_all
from .truncation import compute_S_lw, compute_S_oracle, compute_S_single, solve_quadratic_gt

__all__ = [
    "ClusterMeanTest",
    "ClusterPair",
    "ConfigError",
    "DataError",
    "DegenerateDirectionError",
    "DegenerateSupportError",
    "HierarchicalClustering",
    "Interval",
    "IntervalSet",
    "InvalidContrastError",
    "InvalidPairError",
    "Linkage",
    "MergeHistory",
    "NotPositiveDefiniteError",
    "NumericalError",
    "SelclustError",
    "TestResult",
    "TruncatedChi",
    "UnstableEstimateError",
    "check_pair",
    "compute_S_lw",
    "compute_S_oracle",
    "compute_S_single",
    "contrast_vector",
    "cut_clusters",
    "empirical_mean",
    "estimate_sigma",
    "intersect_all",
    "losing_pairs",
    "perturbed_dataset",
    "perturbed_dataset_cov",
    "run_agglomerative",
    "selective_p_cov",
    "selective_p_exact",
    "selective_p_importance",
    "selective_p_plugin",
    "solve_quadratic_gt",
    "test_statistic",
    "truncated_chi_survival",
    "wald_p",
    "wald_p_cov",
]
