"""Sample-level evaluation toolkit for model-inversion attacks."""

__version__ = "0.1.0"

from .data import FeatureSet, LogitsTable, load_feature_set, load_logits, save_feature_set
from .ddcs import DdcsConfig, DdcsResult, accumulate_sets, compute_ddcs, ddcs, knn_dist
from .distance import DistanceMetric, distance, kneighbors, nearest_target, pairwise_matrix
from .estimators import CoverageScorer, DDCSScorer, FrechetDistance, NearestTargetClassifier
from .metrics import coverage, feature_distance, fid, gaussian_stats, topk_accuracy

__all__ = [
    "CoverageScorer",
    "DDCSScorer",
    "DdcsConfig",
    "DdcsResult",
    "DistanceMetric",
    "FeatureSet",
    "FrechetDistance",
    "LogitsTable",
    "NearestTargetClassifier",
    "accumulate_sets",
    "compute_ddcs",
    "coverage",
    "ddcs",
    "distance",
    "feature_distance",
    "fid",
    "gaussian_stats",
    "kneighbors",
    "knn_dist",
    "load_feature_set",
    "load_logits",
    "nearest_target",
    "pairwise_matrix",
    "save_feature_set",
    "topk_accuracy",
]
