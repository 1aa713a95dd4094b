"""Datasets, region splits, seeded subsampling and error observations.

Sampling uses numpy's ``Generator`` over the PCG64 bit generator, seeded with
the integer seed given by the caller. PCG64 output is specified bit-for-bit,
so a given (dataset, fraction, seed) triple selects the same rows on every
platform.
"""

from __future__ import annotations

import csv
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .base import predict_labels
from .errors import ConfigError, DataError

_OPS = {
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}


def make_rng(seed: int) -> np.random.Generator:
    """The one PRNG used for all sampling in the package (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.feature_names))
        y = np.asarray(self.labels).reshape(-1)
        names = tuple(self.feature_names)
        if X.ndim != 2:
            raise DataError(f"features must be a matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(
                f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if X.shape[1] != len(names):
            raise DataError(
                f"{X.shape[1]} feature columns but {len(names)} names")
        if len(set(names)) != len(names):
            raise DataError(f"duplicate feature names in {names}")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        X.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.labels.shape[0]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(
                f"unknown feature {name!r}; have {list(self.feature_names)}"
            ) from None

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.feature_index(name)]

    def take(self, rows) -> LabeledDataset:
        rows = np.asarray(rows, dtype=np.intp)
        return LabeledDataset(self.features[rows], self.labels[rows],
                              self.feature_names)

    def select_features(self, names) -> LabeledDataset:
        """Keep only the named columns, in the order given."""
        idx = [self.feature_index(n) for n in names]
        return LabeledDataset(self.features[:, idx], self.labels, tuple(names))


@dataclass(frozen=True)
class RegionPredicate:
    feature: str
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise ConfigError(f"unsupported comparison {self.op!r}")

    @classmethod
    def parse(cls, text: str) -> RegionPredicate:
        """Parse ``"C1>-50"`` style text (whitespace allowed)."""
        m = re.fullmatch(r"\s*([A-Za-z_][\w.]*)\s*(<=|>=|<|>)\s*(\S+)\s*", text)
        if m is None:
            raise ConfigError(f"cannot parse region predicate {text!r}")
        try:
            threshold = float(m.group(3))
        except ValueError:
            raise ConfigError(
                f"bad threshold in region predicate {text!r}") from None
        return cls(m.group(1), m.group(2), threshold)

    def mask(self, ds: LabeledDataset) -> np.ndarray:
        return _OPS[self.op](ds.column(self.feature), self.threshold)

    def __str__(self):
        return f"{self.feature}{self.op}{self.threshold!r}"


@dataclass(frozen=True)
class ErrorObservations:
    """Inputs paired with 0/1 indicators of where the base model was wrong."""

    inputs: np.ndarray
    errors: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        e = np.asarray(self.errors).reshape(-1)
        if X.shape[0] != e.shape[0]:
            raise DataError(f"{X.shape[0]} inputs but {e.shape[0]} errors")
        if e.size and not np.all((e == 0) | (e == 1)):
            raise DataError("error bits must be 0 or 1")
        names = tuple(self.feature_names) or tuple(
            f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names does not match input width")
        e = e.astype(np.int8)
        X.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "errors", e)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.errors.shape[0]

    def flipped(self) -> ErrorObservations:
        return ErrorObservations(self.inputs, 1 - self.errors,
                                 self.feature_names)


def _parse_float(text, row, column):
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"non-numeric value {text!r} at row {row}, column {column!r}"
        ) from None


def load_csv(path, label_column: str, positive_value: str) -> LabeledDataset:
    """Read a headed, comma-delimited file into a binary-labelled dataset.

    Every column except ``label_column`` must be numeric. The label becomes 1
    where the raw cell equals ``positive_value`` (compared as stripped text,
    falling back to numeric equality so ``"4"`` matches ``"4.0"``).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if label_column not in header:
            raise DataError(
                f"label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = tuple(h for i, h in enumerate(header) if i != li)
        pos = positive_value.strip()
        try:
            pos_num = float(pos)
        except ValueError:
            pos_num = None
        rows, labels = [], []
        # row numbers are 1-based file lines, header is line 1
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"row {lineno} has {len(rec)} fields, expected {len(header)}")
            raw = rec[li].strip()
            hit = raw == pos
            if not hit and pos_num is not None:
                try:
                    hit = float(raw) == pos_num
                except ValueError:
                    pass
            labels.append(1 if hit else 0)
            rows.append([_parse_float(c, lineno, header[i])
                         for i, c in enumerate(rec) if i != li])
    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return LabeledDataset(X, np.array(labels, dtype=np.int8), names)


def write_csv(ds: LabeledDataset, path, label_column: str = "label") -> None:
    """Write ``ds`` so that ``load_csv(path, label_column, "1")`` restores it."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, label_column])
        for row, lab in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def convert_uci_wifi(src, dst) -> None:
    """Convert the UCI ``wifi_localization.txt`` file to a headed CSV.

    The raw file is whitespace-delimited with seven signal-strength columns
    and the room number last; the output header is ``C1..C7,class``.
    """
    src = Path(src)
    if not src.is_file():
        raise DataError(f"no such file: {src}")
    out = []
    for lineno, line in enumerate(src.read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 8:
            raise DataError(f"{src}:{lineno}: expected 8 fields, got {len(parts)}")
        out.append(parts)
    with Path(dst).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"C{j}" for j in range(1, 8)] + ["class"])
        w.writerows(out)


def region_filter(ds: LabeledDataset, pred: RegionPredicate) -> LabeledDataset:
    return ds.take(np.flatnonzero(pred.mask(ds)))


def sample_fraction(ds: LabeledDataset, fraction: float, seed: int) -> LabeledDataset:
    """Uniform sample of ``floor(fraction * n)`` rows without replacement.

    Selected rows keep their original relative order, so ``fraction=1`` is
    the identity.
    """
    if not (0.0 < fraction <= 1.0) or math.isnan(fraction):
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    if len(ds) < 1:
        raise DataError("cannot sample from an empty dataset")
    return sample_size(ds, math.floor(fraction * len(ds)), seed)


def sample_size(ds: LabeledDataset, size: int, seed: int) -> LabeledDataset:
    """Uniform sample of exactly ``size`` rows without replacement."""
    if size < 0 or size > len(ds):
        raise DataError(f"cannot draw {size} rows from {len(ds)}")
    idx = make_rng(seed).choice(len(ds), size=size, replace=False)
    return ds.take(np.sort(idx))


def make_error_observations(ds: LabeledDataset, base) -> ErrorObservations:
    if len(ds) < 1:
        raise DataError("cannot build error observations from an empty dataset")
    preds = predict_labels(base, ds.features)
    errors = (preds != ds.labels).astype(np.int8)
    return ErrorObservations(ds.features, errors, ds.feature_names)


def write_error_csv(obs: ErrorObservations, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*obs.feature_names, "error"])
        for row, e in zip(obs.inputs, obs.errors):
            w.writerow([repr(float(v)) for v in row] + [int(e)])


def load_error_csv(path) -> ErrorObservations:
    ds = load_csv(path, "error", "1")
    return ErrorObservations(ds.features, ds.labels, ds.feature_names)


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine rescaling fitted on one dataset, applied to others."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> Standardizer:
        X = np.asarray(X, dtype=float)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        return cls(X.mean(axis=0), sd)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d) -> Standardizer:
        return cls(np.asarray(d["mean"], float), np.asarray(d["scale"], float))
