"""Synthetic targets and the D1 / D2 robustness sweeps.

D1 sub-samples a fixed number of exact copies per label (perfect distance,
controlled diversity). D2 keeps every target and appends ``r`` exact copies
of each label's first sample (perfect distance and diversity, skewed
distribution).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureSet, as_feature_set
from .ddcs import DdcsConfig, accumulate_sets, compute_ddcs
from .distance import nearest_target
from .errors import EmptyMetricSet, LabelsRequired, ValidationError
from .metrics import CoverageConfig, coverage, fid, gaussian_stats

SWEEP_METRICS = ("ddcs_avg", "ddcs_best", "knn_dist", "fid", "coverage", "synthetic_accuracy")


def _require_labels(fs, what="target"):
    if fs.labels is None:
        raise LabelsRequired(f"{what} set must be labeled")


def gen_synthetic_targets(n_labels, per_label, dim, seed, center_scale=10.0, spread=1.0):
    """Isotropic Gaussian clusters, one per label, rows grouped by label.

    Centers sit at ``center_scale * e_l`` when there are no more labels than
    dimensions, otherwise at ``center_scale`` times a standard normal draw.
    """
    if min(n_labels, per_label, dim) < 1:
        raise ValidationError("n_labels, per_label and dim must all be >= 1")
    rng = np.random.default_rng(seed)
    if n_labels <= dim:
        centers = center_scale * np.eye(n_labels, dim)
    else:
        centers = center_scale * rng.standard_normal((n_labels, dim))
    labels = np.repeat(np.arange(n_labels), per_label)
    feats = centers[labels] + spread * rng.standard_normal((labels.size, dim))
    return FeatureSet(feats, None, labels)


def build_d1(tar, per_label, seed):
    tar = as_feature_set(tar)
    _require_labels(tar)
    if per_label < 1:
        raise ValidationError(f"per_label must be >= 1, got {per_label}")
    rng = np.random.default_rng(seed)
    rows = []
    for label in np.unique(tar.labels):
        members = rng.permutation(np.flatnonzero(tar.labels == label))
        rows.append(members[:per_label])
    rows = np.concatenate(rows)
    return FeatureSet(tar.features[rows], None, tar.labels[rows])


def build_d2(tar, redundant_per_label):
    tar = as_feature_set(tar)
    _require_labels(tar)
    if redundant_per_label < 0:
        raise ValidationError(f"redundant_per_label must be >= 0, got {redundant_per_label}")
    labels, first = np.unique(tar.labels, return_index=True)
    extra = np.repeat(first, redundant_per_label)
    rows = np.concatenate([np.arange(tar.n_samples), extra])
    return FeatureSet(tar.features[rows], None, tar.labels[rows])


def synthetic_accuracy(rec, tar, metric="euclidean", n_jobs=None, matches=None):
    """1-NN accuracy of ``rec`` labels against their nearest target's label."""
    rec = as_feature_set(rec)
    tar = as_feature_set(tar)
    _require_labels(tar)
    _require_labels(rec, "reconstructed")
    if matches is None:
        matches = nearest_target(rec, tar, metric, n_jobs=n_jobs)
    hits = tar.labels[matches.target_index] == rec.labels
    return int(hits.sum()) / rec.n_samples


@dataclass(frozen=True)
class SweepSpec:
    mode: str
    grid: tuple
    seed: int = 0
    metrics: tuple = SWEEP_METRICS
    ddcs_config: DdcsConfig = field(default_factory=DdcsConfig)
    coverage_k: int = 5
    metric: str = "euclidean"

    def __post_init__(self):
        if self.mode not in ("d1", "d2"):
            raise ValidationError(f"mode must be 'd1' or 'd2', got {self.mode!r}")
        grid = tuple(int(g) for g in self.grid)
        if not grid:
            raise ValidationError("grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("grid must be strictly ascending")
        floor = 1 if self.mode == "d1" else 0
        if grid[0] < floor:
            raise ValidationError(f"{self.mode} grid values must be >= {floor}")
        metrics = tuple(self.metrics)
        if not metrics:
            raise EmptyMetricSet("no metrics requested")
        unknown = [m for m in metrics if m not in SWEEP_METRICS]
        if unknown:
            raise ValidationError(f"unknown sweep metrics {unknown}; choose from {SWEEP_METRICS}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "metrics", metrics)


@dataclass(frozen=True)
class SweepTable:
    metrics: tuple
    grid: tuple
    rows: tuple  # one dict per grid value

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(("grid_value",) + self.metrics) + "\n")
        for g, row in zip(self.grid, self.rows):
            buf.write(",".join([str(g)] + [format(row[m], ".12g") for m in self.metrics]) + "\n")
        return buf.getvalue()


def _sweep_row(rec, tar, spec, tar_stats, n_jobs):
    want = set(spec.metrics)
    row = {}
    if want & {"ddcs_avg", "ddcs_best", "knn_dist", "synthetic_accuracy"}:
        matches = nearest_target(rec, tar, spec.metric, n_jobs=n_jobs)
        if want & {"ddcs_avg", "ddcs_best"}:
            res = compute_ddcs(accumulate_sets(matches, tar.n_samples), spec.ddcs_config)
            row["ddcs_avg"] = res.ddcs_avg
            row["ddcs_best"] = res.ddcs_best
        if "knn_dist" in want:
            row["knn_dist"] = math.fsum(matches.distance.tolist()) / len(matches)
        if "synthetic_accuracy" in want:
            row["synthetic_accuracy"] = synthetic_accuracy(rec, tar, matches=matches)
    if "fid" in want:
        row["fid"] = fid(gaussian_stats(rec), tar_stats)
    if "coverage" in want:
        row["coverage"] = coverage(rec, tar, CoverageConfig(spec.coverage_k), spec.metric, n_jobs=n_jobs)
    return {m: row[m] for m in spec.metrics}


def run_sweep(tar, spec, n_jobs=None):
    """Evaluate every requested metric on D1 or D2 built at each grid value."""
    tar = as_feature_set(tar)
    _require_labels(tar)
    tar_stats = gaussian_stats(tar) if "fid" in spec.metrics else None
    rows = []
    for g in spec.grid:
        rec = build_d1(tar, g, spec.seed) if spec.mode == "d1" else build_d2(tar, g)
        rows.append(_sweep_row(rec, tar, spec, tar_stats, n_jobs))
    return SweepTable(spec.metrics, spec.grid, tuple(rows))
