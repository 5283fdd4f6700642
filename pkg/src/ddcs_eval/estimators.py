"""scikit-learn compatible wrappers.

Each estimator is fitted on the *target* set and then evaluates a
reconstructed set, so the metrics drop into pipelines, ``clone`` and
``get_params``/``set_params`` like any other estimator::

    scorer = DDCSScorer(c=1.0).fit(X_tar)
    scorer.score(X_rec)           # DDCS_avg
    scorer.evaluate(X_rec)        # full DdcsResult
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ddcs import DdcsConfig, accumulate_sets, compute_ddcs, knn_dist
from .distance import kneighbors, nearest_target
from .errors import DimensionMismatch, LabelsRequired
from .metrics import CoverageConfig, coverage, fid, gaussian_stats


def _check(X, fitted=None):
    X = check_array(X, dtype=np.float64)
    if fitted is not None and X.shape[1] != fitted.shape[1]:
        raise DimensionMismatch(f"X has {X.shape[1]} features, estimator was fitted with {fitted.shape[1]}")
    return X


class NearestTargetClassifier(ClassifierMixin, BaseEstimator):
    """Exact 1-nearest-neighbour classifier with lowest-index tie-breaking.

    Its ``score`` is the synthetic accuracy used in the D1/D2 sweeps.
    """

    def __init__(self, metric="euclidean", n_jobs=None):
        self.metric = metric
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        self.targets_ = _check(X)
        self.n_features_in_ = self.targets_.shape[1]
        if y is not None:
            y = np.asarray(y)
            if y.shape != (self.targets_.shape[0],):
                raise LabelsRequired("y must have one label per target row")
            self.classes_ = np.unique(y)
        self.target_labels_ = y
        return self

    def kneighbors(self, X, n_neighbors=1):
        check_is_fitted(self, "targets_")
        idx, dist = kneighbors(_check(X, self.targets_), self.targets_, n_neighbors, self.metric,
                               n_jobs=self.n_jobs)
        return dist, idx

    def predict(self, X):
        check_is_fitted(self, "targets_")
        if self.target_labels_ is None:
            raise LabelsRequired("fit with labels to predict")
        m = nearest_target(_check(X, self.targets_), self.targets_, self.metric, n_jobs=self.n_jobs)
        return self.target_labels_[m.target_index]


class DDCSScorer(BaseEstimator):
    def __init__(self, c=1.0, metric="euclidean", n_jobs=None):
        self.c = c
        self.metric = metric
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        self.targets_ = _check(X)
        self.n_features_in_ = self.targets_.shape[1]
        self.config_ = DdcsConfig(c=float(self.c))
        return self

    def reconstruction_sets(self, X):
        check_is_fitted(self, "targets_")
        m = nearest_target(_check(X, self.targets_), self.targets_, self.metric, n_jobs=self.n_jobs)
        return accumulate_sets(m, self.targets_.shape[0])

    def evaluate(self, X):
        return compute_ddcs(self.reconstruction_sets(X), self.config_)

    def score(self, X, y=None):
        """DDCS_avg of ``X`` against the fitted targets (higher = stronger attack)."""
        return self.evaluate(X).ddcs_avg

    def knn_dist(self, X):
        check_is_fitted(self, "targets_")
        return knn_dist(_check(X, self.targets_), self.targets_, self.metric, n_jobs=self.n_jobs)


class CoverageScorer(BaseEstimator):
    def __init__(self, k=5, metric="euclidean", n_jobs=None):
        self.k = k
        self.metric = metric
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        self.targets_ = _check(X)
        self.n_features_in_ = self.targets_.shape[1]
        _, radii = kneighbors(self.targets_, self.targets_, self.k, self.metric, exclude_self=True,
                              n_jobs=self.n_jobs)
        self.radii_ = radii[:, -1]
        return self

    def score(self, X, y=None):
        check_is_fitted(self, "targets_")
        return coverage(_check(X, self.targets_), self.targets_, CoverageConfig(self.k), self.metric,
                        n_jobs=self.n_jobs)


class FrechetDistance(BaseEstimator):
    """Gaussian fit of the targets; ``distance(X)`` is the FID of ``X`` against it.

    ``score`` returns the negated distance so that greater is better.
    """

    def fit(self, X, y=None):
        X = _check(X)
        self.n_features_in_ = X.shape[1]
        self.stats_ = gaussian_stats(X)
        return self

    def distance(self, X):
        check_is_fitted(self, "stats_")
        X = check_array(X, dtype=np.float64)
        return fid(gaussian_stats(X), self.stats_)

    def score(self, X, y=None):
        return -self.distance(X)
