"""Exact pairwise distances and nearest-neighbour matching.

Every distance this module reports is computed by one canonical kernel:
element-wise differences (or products) are summed strictly left to right, so
a plain Python double loop reproduces the values bit for bit::

    euclidean(a, b)         = sqrt(sum((a_i - b_i)**2))
    squared_euclidean(a, b) = sum((a_i - b_i)**2)
    cosine_distance(a, b)   = 1 - sum(a_i*b_i) / sqrt(sum(a_i**2) * sum(b_i**2))

Neighbour searches use a BLAS screening pass (the ``|a|^2 + |b|^2 - 2ab``
expansion for the euclidean kinds, normalised dot products for cosine) only to
pick candidates. The candidate threshold carries a rigorous bound on the
rounding error of that pass, and the canonical kernel then decides among the
candidates. Results are therefore identical for any tile size or number of
worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from threadpoolctl import threadpool_limits

from .data import as_features
from .errors import CapExceeded, DimensionMismatch, KTooLarge, ValidationError, ZeroNormVector

THREADS_ENV = "DDCS_EVAL_THREADS"
DEFAULT_PAIRWISE_CAP = 10**8

_EPS = np.finfo(np.float64).eps
_TILE_ENTRIES = 1 << 22
_PAIR_CHUNK = 1 << 18


class DistanceMetric(str, Enum):
    EUCLIDEAN = "euclidean"
    SQUARED_EUCLIDEAN = "squared_euclidean"
    COSINE = "cosine_distance"


def as_metric(m):
    try:
        return DistanceMetric(m)
    except ValueError:
        choices = ", ".join(x.value for x in DistanceMetric)
        raise ValidationError(f"unknown metric {m!r}; choose from {choices}") from None


def resolve_threads(n_jobs=None):
    """Worker count: explicit value, else ``$DDCS_EVAL_THREADS``, else CPU count."""
    if n_jobs is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                n_jobs = int(env)
            except ValueError:
                raise ValidationError(f"{THREADS_ENV}={env!r} is not an integer") from None
        else:
            n_jobs = os.cpu_count() or 1
    n_jobs = int(n_jobs)
    if n_jobs < 1:
        raise ValidationError(f"thread count must be >= 1, got {n_jobs}")
    return n_jobs


@dataclass(frozen=True)
class NearestMatches:
    """For each reconstructed row j: the index of its nearest target and the distance."""

    target_index: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return self.target_index.shape[0]


# --- canonical kernel -------------------------------------------------------


def _seq_sum(x):
    # cumulative sum is a strict left-to-right accumulation
    return np.cumsum(x, axis=-1)[..., -1]


def _canonical(a, b, metric):
    """Canonical metric values for row-aligned (broadcastable) arrays a, b."""
    if metric is DistanceMetric.COSINE:
        dot = _seq_sum(a * b)
        denom = np.sqrt(_seq_sum(a * a) * _seq_sum(b * b))
        return np.clip(1.0 - dot / denom, 0.0, 2.0)
    diff = a - b
    sq = _seq_sum(diff * diff)
    if metric is DistanceMetric.EUCLIDEAN:
        return np.sqrt(sq)
    return sq


def _canonical_pairs(Q, R, qi, ri, metric):
    out = np.empty(qi.shape[0], dtype=np.float64)
    for s in range(0, qi.shape[0], _PAIR_CHUNK):
        e = s + _PAIR_CHUNK
        out[s:e] = _canonical(Q[qi[s:e]], R[ri[s:e]], metric)
    return out


def _check_dims(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def _check_cosine(x, what):
    zero = np.flatnonzero(~np.any(x != 0.0, axis=1))
    if zero.size:
        raise ZeroNormVector(f"{what} row {int(zero[0])} has zero norm; cosine distance undefined")


def distance(a, b, metric="euclidean"):
    """Distance between two vectors under ``metric``."""
    metric = as_metric(metric)
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    _check_dims(a, b)
    if metric is DistanceMetric.COSINE:
        if not np.any(a) or not np.any(b):
            raise ZeroNormVector("cosine distance needs non-zero vectors")
    return float(_canonical(a, b, metric))


def pairwise_matrix(rec, tar, metric="euclidean", cap=DEFAULT_PAIRWISE_CAP):
    """Full distance matrix with ``out[j, i] = d(rec_j, tar_i)``.

    Intended for small instances and as a test oracle; refuses more than
    ``cap`` entries.
    """
    metric = as_metric(metric)
    R = as_features(rec)
    T = as_features(tar)
    _check_dims(R, T)
    if R.shape[0] * T.shape[0] > cap:
        raise CapExceeded(f"{R.shape[0]}x{T.shape[0]} matrix exceeds cap of {cap} entries")
    if metric is DistanceMetric.COSINE:
        _check_cosine(R, "rec")
        _check_cosine(T, "tar")
    out = np.empty((R.shape[0], T.shape[0]), dtype=np.float64)
    rows = max(1, _PAIR_CHUNK // max(1, T.shape[0]))
    for s in range(0, R.shape[0], rows):
        block = R[s:s + rows]
        out[s:s + rows] = _canonical(block[:, None, :], T[None, :, :], metric)
    return out


# --- screened exact k-NN ----------------------------------------------------


class _Screen:
    """Precomputed quantities for the BLAS screening pass."""

    def __init__(self, Q, R, metric):
        d = Q.shape[1]
        self.metric = metric
        if metric is DistanceMetric.COSINE:
            self.Qs = Q / np.sqrt(np.einsum("ij,ij->i", Q, Q))[:, None]
            self.Rs = R / np.sqrt(np.einsum("ij,ij->i", R, R))[:, None]
            self.tol = np.full(Q.shape[0], 32.0 * (d + 8) * _EPS)
        else:
            self.Qs, self.Rs = Q, R
            self.qn = np.einsum("ij,ij->i", Q, Q)
            self.rn = np.einsum("ij,ij->i", R, R)
            rmax = float(self.rn.max()) if self.rn.size else 0.0
            # covers expansion error plus the canonical kernel's own rounding
            self.tol = 16.0 * (d + 4) * _EPS * (self.qn + rmax) + np.finfo(np.float64).tiny

    def approx(self, s, e):
        if self.metric is DistanceMetric.COSINE:
            return 1.0 - self.Qs[s:e] @ self.Rs.T
        g = self.Qs[s:e] @ self.Rs.T
        g *= -2.0
        g += self.qn[s:e, None]
        g += self.rn[None, :]
        return g


def _knn_block(Q, R, screen, s, e, k, exclude_self, idx_out, dist_out):
    A = screen.approx(s, e)
    b = e - s
    if exclude_self:
        A[np.arange(b), np.arange(s, e)] = np.inf
    if k == 1:
        kth = A.min(axis=1)
    else:
        kth = np.partition(A, k - 1, axis=1)[:, k - 1]
    thresh = kth + 2.0 * screen.tol[s:e]
    rows, cols = np.nonzero(A <= thresh[:, None])
    del A
    vals = _canonical_pairs(Q, R, rows + s, cols, screen.metric)
    order = np.lexsort((cols, vals, rows))
    counts = np.bincount(rows, minlength=b)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pick = order[starts[:, None] + np.arange(k)[None, :]]
    idx_out[s:e] = cols[pick]
    dist_out[s:e] = vals[pick]


def kneighbors(queries, refs, k=1, metric="euclidean", exclude_self=False, n_jobs=None, block_rows=None):
    """Exact k nearest reference rows for every query row.

    Returns ``(indices, distances)``, both ``n_queries x k``, sorted by
    distance with ties going to the lower reference index. With
    ``exclude_self`` the queries must be the references themselves and each
    row's own index is skipped (duplicates of it are not).
    """
    metric = as_metric(metric)
    Q = as_features(queries)
    R = as_features(refs)
    _check_dims(Q, R)
    if exclude_self and Q.shape[0] != R.shape[0]:
        raise ValidationError("exclude_self requires queries and refs to be the same set")
    available = R.shape[0] - (1 if exclude_self else 0)
    if k < 1 or k > available:
        raise KTooLarge(f"k={k} invalid for {available} candidate neighbours")
    if metric is DistanceMetric.COSINE:
        _check_cosine(Q, "query")
        _check_cosine(R, "reference")

    n = Q.shape[0]
    if block_rows is None:
        block_rows = int(np.clip(_TILE_ENTRIES // max(1, R.shape[0]), 16, 1024))
    screen = _Screen(Q, R, metric)
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k), dtype=np.float64)
    bounds = [(s, min(s + block_rows, n)) for s in range(0, n, block_rows)]
    workers = min(resolve_threads(n_jobs), len(bounds))

    def run(span):
        _knn_block(Q, R, screen, span[0], span[1], k, exclude_self, idx, dist)

    if workers <= 1:
        for span in bounds:
            run(span)
    else:
        with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(run, bounds):
                pass
    return idx, dist


def nearest_target(rec, tar, metric="euclidean", n_jobs=None, block_rows=None):
    """Nearest target (lowest index on ties) and its distance for every rec row."""
    idx, dist = kneighbors(rec, tar, 1, metric, n_jobs=n_jobs, block_rows=block_rows)
    return NearestMatches(idx[:, 0].copy(), dist[:, 0].copy())
