"""Tabular sensor data: CSV loading, cleaning, categorical encoding, scaling, splitting.

Every downstream stage consumes a :class:`Dataset`, a read-only float matrix
with column names and optional 0/1 ground-truth labels.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from saad.errors import (
    DataError,
    EmptyDatasetError,
    MissingColumnError,
    UnseenCategoryError,
    ValidationError,
)

MISSING_TOKENS = frozenset({"", "NaN", "nan"})


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def format_float(x: float) -> str:
    """Decimal text that round-trips a 64-bit float exactly."""
    if math.isnan(x):
        return "NaN"
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ColumnSpec:
    selected_features: tuple[str, ...]
    target_column: str | None = None
    categorical_columns: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "selected_features", tuple(self.selected_features))
        object.__setattr__(self, "categorical_columns", tuple(self.categorical_columns))
        if not self.selected_features:
            raise ValidationError("selected_features must not be empty")
        if len(set(self.selected_features)) != len(self.selected_features):
            raise ValidationError("selected_features contains duplicates")
        if self.target_column is not None and self.target_column in self.selected_features:
            raise ValidationError(f"target column {self.target_column!r} is also a feature")
        stray = [c for c in self.categorical_columns if c not in self.selected_features]
        if stray:
            raise ValidationError(f"categorical columns not among selected features: {stray}")


@dataclass(frozen=True)
class Dataset:
    """m x n feature matrix plus metadata.

    ``raw_categoricals`` holds the original text of categorical columns that
    have not been through :func:`encode_categoricals` yet; the matching matrix
    columns contain a 0.0 placeholder until then.
    """

    feature_names: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray | None = None
    row_ids: tuple[str, ...] | None = None
    raw_categoricals: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.feature_names)
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(names))
        if X.ndim != 2:
            raise ValidationError("features must be a 2-D matrix")
        if X.shape[1] != len(names):
            raise ValidationError(
                f"{X.shape[1]} feature columns but {len(names)} feature names"
            )
        m = X.shape[0]
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "features", _frozen(X))
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.float64).reshape(-1)
            if y.shape[0] != m:
                raise ValidationError(f"{y.shape[0]} labels for {m} rows")
            known = y[~np.isnan(y)]
            if not np.all((known == 0) | (known == 1)):
                raise DataError("labels must be 0 or 1")
            if not np.isnan(y).any():
                y = y.astype(np.int64)
            object.__setattr__(self, "labels", _frozen(y))
        if self.row_ids is not None:
            ids = tuple(self.row_ids)
            if len(ids) != m:
                raise ValidationError(f"{len(ids)} row ids for {m} rows")
            object.__setattr__(self, "row_ids", ids)
        raw = {}
        for name, values in self.raw_categoricals.items():
            if name not in names:
                raise ValidationError(f"raw categorical {name!r} is not a feature")
            if len(values) != m:
                raise ValidationError(f"raw categorical {name!r} has wrong length")
            raw[name] = tuple(values)
        object.__setattr__(self, "raw_categoricals", MappingProxyType(raw))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "Dataset":
        """New dataset made of the given row indices, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            feature_names=self.feature_names,
            features=self.features[rows],
            labels=None if self.labels is None else self.labels[rows],
            row_ids=None if self.row_ids is None else tuple(self.row_ids[i] for i in rows),
            raw_categoricals={k: tuple(v[i] for i in rows) for k, v in self.raw_categoricals.items()},
        )


@dataclass(frozen=True)
class ScalerParams:
    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.means, dtype=np.float64).reshape(-1)
        sd = np.asarray(self.stddevs, dtype=np.float64).reshape(-1)
        if mu.shape != sd.shape:
            raise ValidationError("means and stddevs differ in length")
        if np.any(sd < 0):
            raise ValidationError("stddevs must be non-negative")
        object.__setattr__(self, "means", _frozen(mu))
        object.__setattr__(self, "stddevs", _frozen(sd))

    @property
    def constant(self) -> np.ndarray:
        return self.stddevs == 0

    def to_dict(self) -> dict:
        return {
            "means": [format_float(x) for x in self.means],
            "stddevs": [format_float(x) for x in self.stddevs],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScalerParams":
        return cls(
            means=np.array([float(x) for x in d["means"]]),
            stddevs=np.array([float(x) for x in d["stddevs"]]),
        )


def _parse_number(token: str, column: str, line: int) -> float:
    token = token.strip()
    if token in MISSING_TOKENS:
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise DataError(f"non-numeric value {token!r} in column {column!r} (line {line})") from None


def load_csv(path, spec: ColumnSpec) -> Dataset:
    """Read the selected columns of a headed, comma-separated UTF-8 file.

    Missing cells ("", "NaN", "nan") become NaN and are removed later by
    :func:`clean_rows`. Categorical columns are kept as text until
    :func:`encode_categoricals`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path} has no header row")
        header = [h.strip() for h in header]
        wanted = list(spec.selected_features)
        if spec.target_column is not None:
            wanted.append(spec.target_column)
        absent = [c for c in wanted if c not in header]
        if absent:
            raise MissingColumnError(f"{path}: columns not found in header: {absent}")
        col = {name: header.index(name) for name in wanted}
        cat = set(spec.categorical_columns)

        rows, labels, raw = [], [], {c: [] for c in spec.categorical_columns}
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(record)} fields, expected {len(header)}")
            values = []
            for name in spec.selected_features:
                token = record[col[name]]
                if name in cat:
                    token = token.strip()
                    raw[name].append(None if token in MISSING_TOKENS else token)
                    values.append(0.0)
                else:
                    values.append(_parse_number(token, name, lineno))
            rows.append(values)
            if spec.target_column is not None:
                labels.append(_parse_number(record[col[spec.target_column]], spec.target_column, lineno))

    if not rows:
        raise EmptyDatasetError(f"{path} has no data rows")
    return Dataset(
        feature_names=spec.selected_features,
        features=np.array(rows, dtype=np.float64),
        labels=np.array(labels) if spec.target_column is not None else None,
        row_ids=tuple(f"{path.name}:{i}" for i in range(len(rows))),
        raw_categoricals=raw,
    )


def write_csv(ds: Dataset, path, target_column: str = "label") -> Path:
    """Write ``ds`` in the dialect :func:`load_csv` reads (17 significant digits)."""
    if ds.raw_categoricals:
        raise ValidationError("encode categorical columns before writing")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(ds.feature_names)
        if ds.labels is not None:
            header.append(target_column)
        writer.writerow(header)
        for i in range(ds.n_rows):
            row = [format_float(x) for x in ds.features[i]]
            if ds.labels is not None:
                y = ds.labels[i]
                row.append("NaN" if np.isnan(y) else str(int(y)))
            writer.writerow(row)
    return path


def clean_rows(ds: Dataset) -> Dataset:
    """Drop every row holding a missing or non-finite value; keep survivor order."""
    keep = np.all(np.isfinite(ds.features), axis=1)
    if ds.labels is not None:
        keep &= ~np.isnan(np.asarray(ds.labels, dtype=np.float64))
    for values in ds.raw_categoricals.values():
        keep &= np.array([v is not None for v in values], dtype=bool)
    if ds.n_rows and not keep.any():
        raise EmptyDatasetError("every row contains a missing value")
    if keep.all():
        return ds
    return ds.take(np.flatnonzero(keep))


@dataclass(frozen=True)
class CategoryMap:
    """Ordinal codes per categorical column, in first-appearance order."""

    codes: Mapping[str, Mapping[str, int]]

    def to_dict(self) -> dict:
        return {col: dict(m) for col, m in self.codes.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CategoryMap":
        return cls({col: {str(k): int(v) for k, v in m.items()} for col, m in d.items()})


def encode_categoricals(
    ds: Dataset, spec: ColumnSpec, mapping: CategoryMap | None = None
) -> tuple[Dataset, CategoryMap]:
    """Replace categorical text columns with 0-based integer codes.

    Without ``mapping`` the codes are assigned by first appearance and
    returned. With a ``mapping`` from training, a value it does not know
    raises :class:`UnseenCategoryError`.
    """
    missing = [c for c in spec.categorical_columns if c not in ds.raw_categoricals]
    if missing:
        raise MissingColumnError(f"categorical columns not present as text: {missing}")
    X = np.array(ds.features, copy=True)
    learned: dict[str, dict[str, int]] = {}
    for name in spec.categorical_columns:
        values = ds.raw_categoricals[name]
        if mapping is None:
            codes: dict[str, int] = {}
            for v in values:
                if v is not None and v not in codes:
                    codes[v] = len(codes)
        else:
            if name not in mapping.codes:
                raise MissingColumnError(f"no category map for column {name!r}")
            codes = dict(mapping.codes[name])
        j = ds.feature_names.index(name)
        for i, v in enumerate(values):
            if v is None:
                X[i, j] = math.nan
            elif v in codes:
                X[i, j] = codes[v]
            else:
                raise UnseenCategoryError(f"value {v!r} of column {name!r} was not seen in training")
        learned[name] = codes
    rest = {k: v for k, v in ds.raw_categoricals.items() if k not in learned}
    return replace(ds, features=X, raw_categoricals=rest), CategoryMap(learned)


def fit_scaler(ds: Dataset) -> ScalerParams:
    """Per-column mean and population standard deviation (divisor m)."""
    X = ds.features
    if X.shape[0] < 2:
        raise ValidationError(f"need at least 2 rows to fit a scaler, got {X.shape[0]}")
    means = X.mean(axis=0)
    stddevs = X.std(axis=0)
    stddevs[np.ptp(X, axis=0) == 0] = 0.0
    return ScalerParams(means, stddevs)


def apply_scaler(ds: Dataset, sp: ScalerParams) -> Dataset:
    """Standardize columns; constant columns become 0."""
    if sp.means.shape[0] != ds.n_features:
        raise ValidationError(
            f"scaler fitted on {sp.means.shape[0]} features, dataset has {ds.n_features}"
        )
    const = sp.constant
    safe = np.where(const, 1.0, sp.stddevs)
    Z = (ds.features - sp.means) / safe
    Z[:, const] = 0.0
    return replace(ds, features=Z)


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random partition; each part keeps the original row order."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    m = ds.n_rows
    if m < 2:
        raise ValidationError("need at least 2 rows to split")
    perm = np.random.default_rng(seed).permutation(m)
    n_train = math.floor(train_fraction * m)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


def prepare(
    ds: Dataset,
    spec: ColumnSpec,
    mapping: CategoryMap | None = None,
    scaler: ScalerParams | None = None,
) -> tuple[Dataset, CategoryMap, ScalerParams]:
    """clean -> encode -> scale. Pass ``mapping``/``scaler`` from training at inference."""
    ds = clean_rows(ds)
    ds, mapping = encode_categoricals(ds, spec, mapping)
    ds = clean_rows(ds)
    if scaler is None:
        scaler = fit_scaler(ds)
    return apply_scaler(ds, scaler), mapping, scaler

