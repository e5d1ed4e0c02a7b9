"""Dataset ingestion, missing-token parsing and per-feature standardization.

Missing entries are tracked by an explicit boolean mask; the value stored
under a missing cell is a sentinel (0.0) that no downstream code reads.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MISSING_TOKENS = frozenset({"NA", "?", ""})
SD_FLOOR = 1e-8


class DataFormatError(ValueError):
    """Raised for malformed input files; carries the 1-based row number."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class IncompletePoint:
    values: np.ndarray
    missing: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        missing = tuple(sorted(set(int(j) for j in self.missing)))
        n = values.shape[0]
        if any(j < 0 or j >= n for j in missing):
            raise ValueError(f"missing index out of range for dimension {n}")
        observed = np.ones(n, dtype=bool)
        observed[list(missing)] = False
        if not np.all(np.isfinite(values[observed])):
            raise ValueError("observed entries must be finite")
        values = values.copy()
        values[list(missing)] = 0.0
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def observed(self) -> np.ndarray:
        """Boolean mask of observed coordinates."""
        mask = np.ones(self.dim, dtype=bool)
        mask[list(self.missing)] = False
        return mask


@dataclass(frozen=True)
class Dataset:
    """A labelled incomplete dataset.

    Parameters
    ----------
    values : (M, N) array
        Feature values. Entries under ``missing`` are sentinels (0.0).
    missing : (M, N) bool array
        True where the cell is missing.
    labels : (M,) int array
        Class labels in {-1, +1}.
    feature_names : list of str, optional
    label_names : pair of str, optional
        Raw label values mapped to -1 and +1 respectively.
    """

    values: np.ndarray
    missing: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    label_names: tuple[str, str] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        missing = np.array(self.missing, dtype=bool)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if values.ndim != 2 or missing.shape != values.shape:
            raise ValueError("values and missing must be matching 2-D arrays")
        if values.shape[0] < 1 or labels.shape[0] != values.shape[0]:
            raise ValueError("need at least one point and one label per point")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if not np.all(np.isfinite(values[~missing])):
            raise ValueError("observed entries must be finite")
        values[missing] = 0.0
        for arr in (values, missing, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "labels", labels)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != values.shape[1]:
                raise ValueError("feature_names length does not match dimension")
            object.__setattr__(self, "feature_names", names)
        if self.label_names is not None:
            object.__setattr__(self, "label_names", tuple(self.label_names))

    @classmethod
    def from_array(cls, X, y, feature_names=None, label_names=None) -> "Dataset":
        """Build from an array where NaN marks missing cells."""
        X = np.asarray(X, dtype=float)
        return cls(np.where(np.isnan(X), 0.0, X), np.isnan(X), y,
                   feature_names, label_names)

    @classmethod
    def from_points(cls, points: Sequence[IncompletePoint], labels,
                    feature_names=None) -> "Dataset":
        values = np.stack([p.values for p in points])
        missing = np.stack([~p.observed for p in points])
        return cls(values, missing, labels, feature_names)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def points(self) -> list[IncompletePoint]:
        return [IncompletePoint(self.values[i], np.flatnonzero(self.missing[i]))
                for i in range(len(self))]

    @property
    def is_complete(self) -> bool:
        return not self.missing.any()

    def to_nan_array(self) -> np.ndarray:
        return np.where(self.missing, np.nan, self.values)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.values[idx], self.missing[idx], self.labels[idx],
                       self.feature_names, self.label_names)

    def with_values(self, values, missing=None) -> "Dataset":
        return Dataset(values, self.missing if missing is None else missing,
                       self.labels, self.feature_names, self.label_names)

    def select_features(self, cols) -> "Dataset":
        cols = list(cols)
        all_names = self.feature_names or tuple(f"x{j}" for j in range(self.n_features))
        names = tuple(all_names[c] for c in cols)
        return Dataset(self.values[:, cols], self.missing[:, cols], self.labels,
                       names, self.label_names)


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    sd: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["sd"], dtype=float))


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _label_sort_key(raw: str):
    return (0, float(raw), raw) if _is_number(raw) else (1, 0.0, raw)


def load_csv(path, missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
             label_column: int | str | None = -1, header: bool | None = None) -> Dataset:
    """Load a labelled CSV file.

    Parameters
    ----------
    path : path-like
    missing_tokens : iterable of str
        Cells (after stripping whitespace) equal to any of these are missing.
    label_column : int, str or None
        Column index (negative allowed) or header name of the class label.
        ``None`` reads features only; every label is then set to +1.
    header : bool or None
        Whether the first row is a header. ``None`` auto-detects: the first
        row is a header if any feature cell in it is neither numeric nor a
        missing token.

    Returns
    -------
    Dataset
        Labels are mapped to -1/+1 in sorted order of the two raw values.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    return parse_csv(text, missing_tokens, label_column, header)


def parse_csv(text: str, missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
              label_column: int | str | None = -1, header: bool | None = None) -> Dataset:
    tokens = {t.strip() for t in missing_tokens}
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError("file contains no rows")
    width = len(rows[0])
    unlabelled = label_column is None
    if unlabelled:
        rows = [r + ["+"] for r in rows]
        width += 1
        label_column = -1
    if width < 2:
        raise DataFormatError("need at least one feature column and a label column", 1)

    if header is None:
        if isinstance(label_column, str):
            header = True
        else:
            lab_idx = label_column % width
            header = any(not _is_number(c.strip()) and c.strip() not in tokens
                         for j, c in enumerate(rows[0]) if j != lab_idx)
    names = [c.strip() for c in rows[0]] if header else None

    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise DataFormatError(f"label column {label_column!r} not found in header", 1)
        lab = names.index(label_column)
    else:
        lab = label_column % width
    feat_cols = [c for c in range(width) if c != lab]

    body_start = 1 if header else 0
    values, missing, raw_labels = [], [], []
    for k, row in enumerate(rows[body_start:], start=body_start + 1):
        if len(row) != width:
            raise DataFormatError(f"expected {width} columns, found {len(row)}", k)
        vals, miss = [], []
        for c in feat_cols:
            cell = row[c].strip()
            if cell in tokens:
                vals.append(0.0)
                miss.append(True)
                continue
            try:
                x = float(cell)
            except ValueError:
                raise DataFormatError(f"non-numeric value {cell!r} in column {c}", k) from None
            if not math.isfinite(x):
                raise DataFormatError(f"non-finite value {cell!r} in column {c}", k)
            vals.append(x)
            miss.append(False)
        label = row[lab].strip()
        if label in tokens:
            raise DataFormatError("label is missing", k)
        values.append(vals)
        missing.append(miss)
        raw_labels.append(label)

    if not values:
        raise DataFormatError("file contains a header but no data rows")
    if unlabelled:
        feature_names = tuple(names[c] for c in feat_cols) if names else None
        n = len(values)
        return Dataset(np.array(values, dtype=float).reshape(n, len(feat_cols)),
                       np.array(missing, dtype=bool).reshape(n, len(feat_cols)),
                       [1] * n, feature_names, None)
    distinct = sorted(set(raw_labels), key=_label_sort_key)
    if len(distinct) > 2:
        raise DataFormatError(f"expected two label values, found {len(distinct)}: {distinct[:5]}")
    if len(distinct) == 1:
        raise DataFormatError(f"only one label value present: {distinct[0]!r}")
    label_map = {distinct[0]: -1, distinct[1]: 1}
    labels = [label_map[r] for r in raw_labels]
    feature_names = tuple(names[c] for c in feat_cols) if names else None
    return Dataset(np.array(values, dtype=float).reshape(len(values), len(feat_cols)),
                   np.array(missing, dtype=bool).reshape(len(values), len(feat_cols)),
                   labels, feature_names, (distinct[0], distinct[1]))


def format_dataset(data: Dataset, missing_token: str = "NA") -> str:
    """Serialize to CSV text with the label as the last column."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    names = data.feature_names or tuple(f"x{j}" for j in range(data.n_features))
    writer.writerow(list(names) + ["label"])
    if data.label_names is not None:
        lab = {-1: data.label_names[0], 1: data.label_names[1]}
    else:
        lab = {-1: "-1", 1: "1"}
    for i in range(len(data)):
        cells = [missing_token if data.missing[i, j] else repr(float(data.values[i, j]))
                 for j in range(data.n_features)]
        writer.writerow(cells + [lab[int(data.labels[i])]])
    return out.getvalue()


def write_csv(data: Dataset, path, missing_token: str = "NA") -> None:
    Path(path).write_text(format_dataset(data, missing_token))


def fit_standardization(data: Dataset) -> StandardizationParams:
    """Per-feature mean and (population) sd over observed entries only."""
    observed = ~data.missing
    counts = observed.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        j = int(empty[0])
        name = data.feature_names[j] if data.feature_names else f"feature {j}"
        raise ValueError(f"{name} has no observed entries")
    X = np.where(observed, data.values, 0.0)
    mean = X.sum(axis=0) / counts
    resid = np.where(observed, data.values - mean, 0.0)
    sd = np.sqrt((resid ** 2).sum(axis=0) / counts)
    return StandardizationParams(mean, np.maximum(sd, SD_FLOOR))


def apply_standardization(data: Dataset, params: StandardizationParams) -> Dataset:
    if params.mean.shape[0] != data.n_features:
        raise ValueError(f"dimension mismatch: params for {params.mean.shape[0]} "
                         f"features, data has {data.n_features}")
    Z = (data.values - params.mean) / params.sd
    return data.with_values(np.where(data.missing, 0.0, Z))


def invert_standardization(data: Dataset, params: StandardizationParams) -> Dataset:
    if params.mean.shape[0] != data.n_features:
        raise ValueError("dimension mismatch")
    X = data.values * params.sd + params.mean
    return data.with_values(np.where(data.missing, 0.0, X))
