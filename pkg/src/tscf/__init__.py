"""Pareto-optimal counterfactual explanations for time-series classifiers.

A customized NSGA-II evolves binary change-masks; masked cells take their
values from the nearest unlike neighbor, and candidates are scored on
target-class probability, sparsity, contiguity and plausibility.
"""

from .core import (
    COMMON,
    INDEPENDENT,
    ChangeMask,
    Individual,
    LabeledDataset,
    Subsequence,
    TimeSeriesInstance,
    apply_mask,
    broadcast_mask,
    count_subsequences,
    decompose_mask,
    reconstruct_mask,
)
from .driver import (
    FrontMember,
    ParetoFront,
    RunConfig,
    UtilityWeights,
    run_multispace,
    select_by_utility,
)
from .genetic import MutationRates, Population
from .models import (
    ExternalModelBridge,
    KnnClassifier,
    LinearReconstructionScorer,
    NearestCentroidClassifier,
    fit_knn,
    fit_linear_scorer,
    fit_nearest_centroid,
    load_model,
    save_model,
)
from .neighbors import NunResult, find_nun
from .objectives import ObjectiveConfig, ObjectiveVector, evaluate_objectives

__version__ = "0.1.0"

__all__ = [
    "COMMON",
    "INDEPENDENT",
    "ChangeMask",
    "ExternalModelBridge",
    "FrontMember",
    "Individual",
    "KnnClassifier",
    "LabeledDataset",
    "LinearReconstructionScorer",
    "MutationRates",
    "NearestCentroidClassifier",
    "NunResult",
    "ObjectiveConfig",
    "ObjectiveVector",
    "ParetoFront",
    "Population",
    "RunConfig",
    "Subsequence",
    "TimeSeriesInstance",
    "UtilityWeights",
    "apply_mask",
    "broadcast_mask",
    "count_subsequences",
    "decompose_mask",
    "evaluate_objectives",
    "find_nun",
    "fit_knn",
    "fit_linear_scorer",
    "fit_nearest_centroid",
    "load_model",
    "reconstruct_mask",
    "run_multispace",
    "save_model",
    "select_by_utility",
]
