"""Diversity and Distance Composite Score (DDCS) and its per-sample reports.

Each reconstructed sample is assigned to its nearest target; the distance is
recorded in that target's reconstruction set. A target's score is
``1 / (avg(S) + c)`` (or ``1 / (min(S) + c)`` for the best-case variant), an
unmatched target scores 0, and both totals are divided by the number of
targets.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import as_feature_set
from .distance import nearest_target
from .errors import DivisionByZero, IndexOutOfRange, LabelsRequired, ValidationError

MDF_CHOICES = ("reciprocal",)


@dataclass(frozen=True)
class DdcsConfig:
    c: float = 1.0
    mdf: str = "reciprocal"

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValidationError(f"c must be a finite non-negative real, got {self.c}")
        if self.mdf not in MDF_CHOICES:
            raise ValidationError(f"unsupported mdf {self.mdf!r}; only 'reciprocal' is available")


@dataclass(frozen=True)
class ReconstructionSets:
    """Per-target lists of ``(rec_index, distance)``, ordered by rec index."""

    n_tar: int
    sets: tuple

    def __post_init__(self):
        if len(self.sets) != self.n_tar:
            raise ValidationError(f"expected {self.n_tar} sets, got {len(self.sets)}")

    @property
    def n_rec(self):
        return sum(len(s) for s in self.sets)

    def matched(self):
        return np.array([len(s) > 0 for s in self.sets], dtype=bool)


@dataclass(frozen=True)
class TargetRecord:
    matched: bool
    avg_dist: float | None = None
    min_dist: float | None = None
    best_rec: int | None = None


@dataclass(frozen=True)
class DdcsResult:
    ddcs_avg: float
    ddcs_best: float
    match_fraction: float
    config: DdcsConfig = field(default_factory=DdcsConfig)
    per_target: tuple = ()

    def to_dict(self, tar_ids=None, rec_ids=None):
        """JSON-ready report. Indices are translated through the id arrays when given."""
        entries = []
        for i, rec in enumerate(self.per_target):
            tid = int(tar_ids[i]) if tar_ids is not None else i
            entry = {"id": tid, "matched": rec.matched}
            if rec.matched:
                entry["avg_dist"] = rec.avg_dist
                entry["min_dist"] = rec.min_dist
                entry["best_rec_id"] = int(rec_ids[rec.best_rec]) if rec_ids is not None else rec.best_rec
            entries.append(entry)
        return {
            "ddcs_avg": self.ddcs_avg,
            "ddcs_best": self.ddcs_best,
            "match_fraction": self.match_fraction,
            "config": {"c": float(self.config.c), "mdf": self.config.mdf},
            "per_target": entries,
        }


def accumulate_sets(matches, n_tar):
    """Group each rec sample's distance under its matched target."""
    idx = np.asarray(matches.target_index, dtype=np.int64)
    dist = np.asarray(matches.distance, dtype=np.float64)
    n_tar = int(n_tar)
    if idx.size:
        bad = np.flatnonzero((idx < 0) | (idx >= n_tar))
        if bad.size:
            j = int(bad[0])
            raise IndexOutOfRange(f"rec {j} matched to target {idx[j]}, outside [0, {n_tar})")
    if np.any(dist < 0):
        raise ValidationError("reconstruction distances must be non-negative")
    buckets = [[] for _ in range(n_tar)]
    for j, (i, d) in enumerate(zip(idx.tolist(), dist.tolist())):
        buckets[i].append((j, d))
    return ReconstructionSets(n_tar, tuple(tuple(b) for b in buckets))


def _set_stats(entries):
    ds = [d for _, d in entries]
    lo = min(ds)
    best_rec = next(j for j, d in entries if d == lo)
    avg = math.fsum(ds) / len(ds)
    # rounding must not push the mean outside [min, max]
    avg = min(max(avg, lo), max(ds))
    return avg, lo, best_rec


def compute_ddcs(sets, config=None):
    config = config or DdcsConfig()
    c = float(config.c)
    avg_terms, best_terms, records = [], [], []
    for i, entries in enumerate(sets.sets):
        if not entries:
            records.append(TargetRecord(False))
            continue
        avg, lo, best_rec = _set_stats(entries)
        if lo + c == 0.0:
            raise DivisionByZero(f"target {i} has a zero reconstruction distance and c = 0")
        avg_terms.append(1.0 / (avg + c))
        best_terms.append(1.0 / (lo + c))
        records.append(TargetRecord(True, avg, lo, best_rec))
    n = sets.n_tar
    if n == 0:
        raise ValidationError("no targets")
    return DdcsResult(
        ddcs_avg=math.fsum(avg_terms) / n,
        ddcs_best=math.fsum(best_terms) / n,
        match_fraction=len(avg_terms) / n,
        config=config,
        per_target=tuple(records),
    )


def ddcs(rec, tar, config=None, metric="euclidean", n_jobs=None):
    """Match ``rec`` to ``tar`` and score; returns ``(sets, result)``."""
    tar = as_feature_set(tar)
    matches = nearest_target(rec, tar, metric, n_jobs=n_jobs)
    sets = accumulate_sets(matches, tar.n_samples)
    return sets, compute_ddcs(sets, config)


def knn_dist(rec, tar, metric="euclidean", n_jobs=None):
    """Mean over reconstructed samples of the distance to their nearest target."""
    matches = nearest_target(rec, tar, metric, n_jobs=n_jobs)
    return math.fsum(matches.distance.tolist()) / len(matches)


# --- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class LabelStats:
    n_targets: int
    matched_fraction: float
    avg_reconstruction_distance: float | None


@dataclass(frozen=True)
class PerLabelReport:
    rows: dict  # label -> LabelStats, ascending by label

    def to_csv(self):
        buf = io.StringIO()
        buf.write("label,matched_fraction,avg_reconstruction_distance\n")
        for label, st in self.rows.items():
            dist = "" if st.avg_reconstruction_distance is None else repr(st.avg_reconstruction_distance)
            buf.write(f"{label},{st.matched_fraction!r},{dist}\n")
        return buf.getvalue()


def per_label_report(sets, tar_labels):
    if tar_labels is None:
        raise LabelsRequired("per-label report needs target labels")
    labels = np.asarray(tar_labels, dtype=np.int64)
    if labels.shape != (sets.n_tar,):
        raise LabelsRequired(f"expected {sets.n_tar} target labels, got {labels.shape}")
    rows = {}
    for label in np.unique(labels).tolist():
        members = np.flatnonzero(labels == label)
        avgs = [_set_stats(sets.sets[i])[0] for i in members if sets.sets[i]]
        rows[label] = LabelStats(
            n_targets=int(members.size),
            matched_fraction=len(avgs) / members.size,
            avg_reconstruction_distance=math.fsum(avgs) / len(avgs) if avgs else None,
        )
    return PerLabelReport(rows)


@dataclass(frozen=True)
class ReconstructionPair:
    target: int
    rec: int
    distance: float


@dataclass(frozen=True)
class VulnerabilityReport:
    mode: str
    ranked: tuple  # of ReconstructionPair, most vulnerable first
    unmatched: tuple  # target indices with no reconstruction pair

    def to_dict(self, tar_ids=None, rec_ids=None):
        tid = (lambda i: int(tar_ids[i])) if tar_ids is not None else int
        rid = (lambda j: int(rec_ids[j])) if rec_ids is not None else int
        return {
            "mode": self.mode,
            "ranked": [
                {"rank": r + 1, "target_id": tid(p.target), "rec_id": rid(p.rec), "distance": p.distance}
                for r, p in enumerate(self.ranked)
            ],
            "unmatched": [tid(i) for i in self.unmatched],
        }


def vulnerability_report(sets, mode="best", top_m=10):
    """Rank matched targets by reconstruction distance (closest first).

    ``mode="best"`` ranks by each target's minimum distance, ``mode="avg"`` by
    the mean; the listed rec sample is the closest contributor in both cases.
    Ties keep ascending target order.
    """
    if mode not in ("best", "avg"):
        raise ValidationError(f"mode must be 'best' or 'avg', got {mode!r}")
    if top_m < 1:
        raise ValidationError(f"top_m must be >= 1, got {top_m}")
    scored, unmatched = [], []
    for i, entries in enumerate(sets.sets):
        if not entries:
            unmatched.append(i)
            continue
        avg, lo, best_rec = _set_stats(entries)
        scored.append((lo if mode == "best" else avg, i, best_rec))
    scored.sort(key=lambda t: (t[0], t[1]))
    ranked = tuple(ReconstructionPair(i, j, d) for d, i, j in scored[:top_m])
    return VulnerabilityReport(mode, ranked, tuple(unmatched))
