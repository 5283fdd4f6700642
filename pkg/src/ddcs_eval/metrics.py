"""Distribution- and classifier-level metrics used alongside DDCS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LogitsTable, as_feature_set, as_features
from .distance import kneighbors, nearest_target
from .errors import (
    DimensionMismatch,
    EigenFailure,
    KTooLarge,
    LabelsRequired,
    TooFewSamples,
    ValidationError,
)

EIG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DimensionMismatch(f"mean {mean.shape} and cov {cov.shape} disagree")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("statistics must be finite")
        scale = max(1.0, float(np.abs(cov).max()))
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValidationError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @property
    def dim(self):
        return self.mean.shape[0]


def gaussian_stats(fs):
    """Column means and unbiased covariance of a feature set."""
    X = as_features(fs)
    n = X.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples for a covariance, got {n}")
    mu = X.mean(axis=0)
    Xc = X - mu
    cov = Xc.T @ Xc / (n - 1)
    return GaussianStats(mu, (cov + cov.T) / 2.0, n)


def _psd_sqrt(m):
    w, v = np.linalg.eigh(m)
    w = np.where(w < EIG_FLOOR, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def fid(a, b):
    """Frechet distance between two Gaussian fits.

    ``|mu_a - mu_b|^2 + tr(S_a) + tr(S_b) - 2 tr((S_a S_b)^(1/2))``; the trace
    term is taken from the eigenvalues of the symmetric matrix
    ``S_a^(1/2) S_b S_a^(1/2)``, which share the spectrum of ``S_a S_b``.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
    try:
        root_a = _psd_sqrt(a.cov)
        inner = root_a @ b.cov @ root_a
        mu = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition failed: {exc}") from exc
    tr_root = float(np.sqrt(np.where(mu < EIG_FLOOR, 0.0, mu)).sum())
    diff = a.mean - b.mean
    value = float(diff @ diff) + float(np.trace(a.cov)) + float(np.trace(b.cov)) - 2.0 * tr_root
    return max(value, 0.0)


def fid_from_features(rec, tar):
    return fid(gaussian_stats(rec), gaussian_stats(tar))


@dataclass(frozen=True)
class CoverageConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise KTooLarge(f"k must be >= 1, got {self.k}")


def coverage(rec, tar, config=None, metric="euclidean", n_jobs=None):
    """Share of targets whose k-NN ball holds at least one reconstructed sample.

    The ball around a target has radius equal to the distance to its k-th
    nearest other target; membership is inclusive of the boundary.
    """
    config = config or CoverageConfig()
    k = config.k
    T = as_features(tar)
    if T.shape[0] <= k:
        raise KTooLarge(f"coverage needs more than k={k} targets, got {T.shape[0]}")
    _, radii = kneighbors(T, T, k, metric, exclude_self=True, n_jobs=n_jobs)
    _, nearest_rec = kneighbors(T, rec, 1, metric, n_jobs=n_jobs)
    covered = nearest_rec[:, 0] <= radii[:, k - 1]
    return int(covered.sum()) / T.shape[0]


def topk_accuracy(table, k=1):
    """Fraction of rows whose true label ranks among the k largest logits.

    Equal logits rank the lower class index first.
    """
    if not isinstance(table, LogitsTable):
        raise ValidationError("expected a LogitsTable")
    n_classes = table.n_classes
    if not 1 <= k <= n_classes:
        raise KTooLarge(f"k={k} must lie in [1, {n_classes}]")
    L = table.logits
    y = table.true_labels
    true_logit = L[np.arange(L.shape[0]), y][:, None]
    cls = np.arange(n_classes)[None, :]
    ahead = (L > true_logit) | ((L == true_logit) & (cls < y[:, None]))
    rank = ahead.sum(axis=1)
    return float(np.count_nonzero(rank < k)) / L.shape[0]


def feature_distance(rec, tar, rec_labels=None, tar_labels=None, metric="euclidean",
                     return_excluded=False, n_jobs=None):
    """Mean distance from each reconstructed sample to its nearest same-label target.

    Reconstructed samples whose label has no targets are left out; pass
    ``return_excluded=True`` to also get their row indices.
    """
    rec_fs = as_feature_set(rec)
    tar_fs = as_feature_set(tar)
    rl = rec_fs.labels if rec_labels is None else np.asarray(rec_labels, dtype=np.int64)
    tl = tar_fs.labels if tar_labels is None else np.asarray(tar_labels, dtype=np.int64)
    if rl is None or tl is None:
        raise LabelsRequired("feature distance needs labels for both sets")
    if rl.shape != (rec_fs.n_samples,) or tl.shape != (tar_fs.n_samples,):
        raise LabelsRequired("label counts do not match the feature sets")

    dists = np.full(rec_fs.n_samples, np.nan)
    for label in np.unique(rl).tolist():
        r_rows = np.flatnonzero(rl == label)
        t_rows = np.flatnonzero(tl == label)
        if t_rows.size == 0:
            continue
        m = nearest_target(rec_fs.features[r_rows], tar_fs.features[t_rows], metric, n_jobs=n_jobs)
        dists[r_rows] = m.distance
    kept = ~np.isnan(dists)
    excluded = np.flatnonzero(~kept)
    if not kept.any():
        raise LabelsRequired("no reconstructed sample shares a label with any target")
    value = math.fsum(dists[kept].tolist()) / int(kept.sum())
    if return_excluded:
        return value, excluded
    return value
