"""Feature sets, logits tables and their on-disk formats.

Two feature formats are supported:

``fmat``
    Little-endian binary: magic ``b"FMAT"``, ``u32`` version (1), ``u64`` rows,
    ``u64`` cols, then ``rows * cols`` IEEE-754 binary32 values in row-major
    order. No ids, no labels.

``csv``
    Optional ``#`` header line(s), then one row per sample: integer id
    followed by the D feature values.

Labels live in a sidecar CSV of ``id,label`` lines. Logits are stored as CSV
rows of ``true_label, l_0, ..., l_{K-1}``.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IoFailure,
    LabelMismatch,
    LabelOutOfRange,
    MalformedFile,
    NonFiniteValue,
    ValidationError,
)

FMAT_MAGIC = b"FMAT"
FMAT_VERSION = 1
_FMAT_HEADER = struct.Struct("<4sIQQ")


def _first_nonfinite(a):
    bad = np.argwhere(~np.isfinite(a))
    if bad.size:
        return tuple(int(v) for v in bad[0])
    return None


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """An ``N x D`` matrix of finite float64 features with ids and optional labels.

    Instances are immutable; the arrays are read-only copies of the inputs.
    ``ids[i]`` always identifies ``features[i]``.
    """

    features: np.ndarray
    ids: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        if feats.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {feats.shape}")
        n, d = feats.shape
        if n < 1 or d < 1:
            raise ValidationError(f"need N >= 1 and D >= 1, got {feats.shape}")
        bad = _first_nonfinite(feats)
        if bad is not None:
            raise NonFiniteValue(*bad)

        if self.ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.asarray(self.ids)
            if ids.shape != (n,):
                raise ValidationError(f"expected {n} ids, got shape {ids.shape}")
            if not np.issubdtype(ids.dtype, np.integer):
                raise ValidationError("ids must be integers")
            ids = ids.astype(np.int64)
            if np.unique(ids).size != n:
                raise ValidationError("ids must be unique")

        labels = None
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise LabelMismatch(f"expected {n} labels, got shape {labels.shape}")
            if labels.size and not np.issubdtype(labels.dtype, np.integer):
                if not np.all(labels == np.round(labels)):
                    raise ValidationError("labels must be integers")
            labels = labels.astype(np.int64)
            if np.any(labels < 0):
                raise ValidationError("labels must be non-negative")

        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "labels", None if labels is None else _frozen(labels))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.features
        return self.features.astype(dtype)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def has_labels(self):
        return self.labels is not None

    def with_labels(self, labels):
        return FeatureSet(self.features, self.ids, labels)

    def take(self, indices, ids=None):
        """Row subset (or repetition) in the given order.

        By default the original ids are kept, which requires ``indices`` to be
        free of repeats; pass ``ids`` explicitly otherwise.
        """
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return FeatureSet(
            self.features[indices],
            self.ids[indices] if ids is None else ids,
            labels,
        )


def as_features(x):
    """Return the float64 feature matrix of a FeatureSet or array-like."""
    if isinstance(x, FeatureSet):
        return x.features
    return FeatureSet(x).features


def as_feature_set(x):
    if isinstance(x, FeatureSet):
        return x
    return FeatureSet(x)


@dataclass(frozen=True, eq=False)
class LogitsTable:
    """Evaluator confidence scores (``N x K``) with the true label of each row."""

    logits: np.ndarray
    true_labels: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 2:
            raise ValidationError(f"logits must be 2-D, got shape {logits.shape}")
        n, k = logits.shape
        if k < 2:
            raise ValidationError(f"need at least 2 classes, got K={k}")
        bad = _first_nonfinite(logits)
        if bad is not None:
            raise NonFiniteValue(*bad)
        labels = np.asarray(self.true_labels)
        if labels.shape != (n,):
            raise LabelMismatch(f"expected {n} labels, got shape {labels.shape}")
        labels = labels.astype(np.int64)
        out = np.flatnonzero((labels < 0) | (labels >= k))
        if out.size:
            i = int(out[0])
            raise LabelOutOfRange(f"row {i}: label {labels[i]} not in [0, {k})")
        object.__setattr__(self, "logits", _frozen(logits))
        object.__setattr__(self, "true_labels", _frozen(labels))

    @property
    def n_classes(self):
        return self.logits.shape[1]


# --- file helpers -----------------------------------------------------------


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temp file and rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise MalformedFile(f"{path}: not a UTF-8 text file") from exc


def _csv_rows(text):
    """Yield ``(line_number, fields)`` for non-blank, non-comment lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped], skipinitialspace=True))
        yield lineno, [f.strip() for f in fields]


def _parse_int(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise MalformedFile(f"line {lineno}: {what} {tok!r} is not an integer") from None


def _parse_reals(tokens, lineno, row):
    vals = []
    for col, tok in enumerate(tokens):
        try:
            v = float(tok)
        except ValueError:
            raise MalformedFile(f"line {lineno}: {tok!r} is not a number") from None
        if not np.isfinite(v):
            raise NonFiniteValue(row, col)
        vals.append(v)
    return vals


def _format_real(v):
    return repr(float(v))


def infer_format(path, format=None):
    if format is not None:
        if format not in ("csv", "fmat"):
            raise ValidationError(f"unknown format {format!r}; expected 'csv' or 'fmat'")
        return format
    suffix = Path(path).suffix.lower()
    if suffix == ".fmat":
        return "fmat"
    if suffix in (".csv", ".txt"):
        return "csv"
    raise ValidationError(f"cannot infer format of {path}; use a .fmat or .csv suffix")


def _load_fmat(path):
    raw = _read_bytes(path)
    if len(raw) < _FMAT_HEADER.size:
        raise MalformedFile(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, rows, cols = _FMAT_HEADER.unpack_from(raw)
    if magic != FMAT_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if version != FMAT_VERSION:
        raise MalformedFile(f"{path}: unsupported version {version}")
    expected = rows * cols * 4
    payload = raw[_FMAT_HEADER.size:]
    if len(payload) != expected:
        raise MalformedFile(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    bad = _first_nonfinite(data)
    if bad is not None:
        raise NonFiniteValue(*bad)
    return data.astype(np.float64)


def _load_csv_features(path):
    ids, rows = [], []
    width = None
    for lineno, fields in _csv_rows(_read_text(path)):
        if width is None:
            width = len(fields)
            if width < 2:
                raise MalformedFile(f"line {lineno}: need an id and at least one value")
        elif len(fields) != width:
            raise MalformedFile(f"line {lineno}: ragged row ({len(fields)} fields, expected {width})")
        ids.append(_parse_int(fields[0], lineno, "id"))
        rows.append(_parse_reals(fields[1:], lineno, len(rows)))
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    return np.asarray(ids, dtype=np.int64), np.asarray(rows, dtype=np.float64)


def load_labels(path, ids):
    """Read an ``id,label`` sidecar and align it to ``ids``."""
    mapping = {}
    for lineno, fields in _csv_rows(_read_text(path)):
        if len(fields) != 2:
            raise MalformedFile(f"line {lineno}: expected 'id,label'")
        key = _parse_int(fields[0], lineno, "id")
        if key in mapping:
            raise MalformedFile(f"line {lineno}: duplicate id {key}")
        mapping[key] = _parse_int(fields[1], lineno, "label")
    ids = [int(i) for i in ids]
    missing = [i for i in ids if i not in mapping]
    if missing or len(mapping) != len(ids):
        raise LabelMismatch(
            f"{path}: {len(mapping)} labels for {len(ids)} samples"
            + (f"; first missing id {missing[0]}" if missing else "")
        )
    return np.asarray([mapping[i] for i in ids], dtype=np.int64)


def load_feature_set(path, format=None, labels_path=None):
    """Load a FeatureSet from ``path``; rows keep their stored order."""
    fmt = infer_format(path, format)
    if fmt == "fmat":
        feats = _load_fmat(path)
        ids = None
    else:
        ids, feats = _load_csv_features(path)
    fs = FeatureSet(feats, ids)
    if labels_path is not None:
        fs = fs.with_labels(load_labels(labels_path, fs.ids))
    return fs


def fmat_bytes(features):
    feats = np.asarray(features, dtype=np.float64)
    rows, cols = feats.shape
    with np.errstate(over="ignore"):
        payload = feats.astype("<f4")
    bad = _first_nonfinite(payload)
    if bad is not None:
        raise NonFiniteValue(*bad, msg=f"value at row={bad[0]}, col={bad[1]} overflows binary32")
    return _FMAT_HEADER.pack(FMAT_MAGIC, FMAT_VERSION, rows, cols) + payload.tobytes()


def save_feature_set(fs, path, format=None):
    """Write ``fs`` as csv or fmat. Labels are not written; see ``save_labels``."""
    fs = as_feature_set(fs)
    fmt = infer_format(path, format)
    if fmt == "fmat":
        atomic_write(path, fmat_bytes(fs.features))
        return
    buf = io.StringIO()
    buf.write(f"# id,{','.join(f'f{j}' for j in range(fs.dim))}\n")
    for i, row in zip(fs.ids, fs.features):
        buf.write(f"{int(i)},{','.join(_format_real(v) for v in row)}\n")
    atomic_write(path, buf.getvalue())


def save_labels(fs, path):
    if fs.labels is None:
        raise ValidationError("feature set has no labels to save")
    lines = ["# id,label"] + [f"{int(i)},{int(l)}" for i, l in zip(fs.ids, fs.labels)]
    atomic_write(path, "\n".join(lines) + "\n")


def load_logits(path):
    labels, rows = [], []
    width = None
    for lineno, fields in _csv_rows(_read_text(path)):
        if width is None:
            width = len(fields)
            if width < 3:
                raise MalformedFile(f"line {lineno}: need a label and at least two logits")
        elif len(fields) != width:
            raise MalformedFile(f"line {lineno}: ragged row ({len(fields)} fields, expected {width})")
        labels.append(_parse_int(fields[0], lineno, "label"))
        rows.append(_parse_reals(fields[1:], lineno, len(rows)))
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    return LogitsTable(np.asarray(rows), np.asarray(labels))


def save_logits(table, path):
    lines = [
        f"{int(y)},{','.join(_format_real(v) for v in row)}"
        for y, row in zip(table.true_labels, table.logits)
    ]
    atomic_write(path, "\n".join(lines) + "\n")
