"""Tabular samples: CSV loading, standardization, splitting and batching."""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from sim2real.errors import (
    ConfigError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    ShapeError,
    ValidationError,
)
from sim2real.linalg import Rng, add_row, as_matrix

# features below this population std pass through unscaled
MIN_SCALE = 1e-12


class Domain(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class Schema:
    feature_columns: tuple[str, ...]
    label_column: Optional[str] = None
    weight_column: Optional[str] = None
    id_column: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if not self.feature_columns:
            raise SchemaError("schema needs at least one feature column")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            dupes = sorted({c for c in self.feature_columns if self.feature_columns.count(c) > 1})
            raise SchemaError(f"duplicate feature columns: {dupes}")
        for role in ("label_column", "weight_column", "id_column"):
            name = getattr(self, role)
            if name is not None and name in self.feature_columns:
                raise SchemaError(f"{role} {name!r} is also listed as a feature")

    @property
    def fingerprint(self) -> str:
        """Hash of the ordered feature names; ties checkpoints to inputs."""
        joined = "\x1f".join(self.feature_columns)
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    def with_roles(self, label: bool = True, weight: bool = True) -> "Schema":
        """Copy with the label and/or weight column switched off."""
        return replace(
            self,
            label_column=self.label_column if label else None,
            weight_column=self.weight_column if weight else None,
        )


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    schema: Schema
    domain: Domain = Domain.SOURCE
    labels: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    ids: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        x = as_matrix(self.features, "features")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "domain", Domain(self.domain))
        n, d = x.shape
        if n < 1:
            raise ValidationError("dataset must contain at least one row")
        if d != len(self.schema.feature_columns):
            raise ShapeError(f"{d} feature columns but schema names {len(self.schema.feature_columns)}")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise ShapeError(f"labels shape {labels.shape} does not match n={n}")
            if not np.all((labels == 0) | (labels == 1)):
                raise ValidationError("labels must be 0 or 1")
            object.__setattr__(self, "labels", labels.astype(np.int64))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (n,):
                raise ShapeError(f"weights shape {w.shape} does not match n={n}")
            if not np.all(np.isfinite(w)):
                raise ValidationError("weights must be finite")
            if np.any(w < 0):
                raise ValidationError("negative weights are not supported")
            if not w.sum() > 0:
                raise ValidationError("weights must have a positive total")
            object.__setattr__(self, "weights", w)
        if self.ids is not None:
            object.__setattr__(self, "ids", np.asarray(self.ids))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Subset (or reorder) rows, carrying labels, weights and ids along."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            schema=self.schema,
            domain=self.domain,
            labels=None if self.labels is None else self.labels[rows],
            weights=None if self.weights is None else self.weights[rows],
            ids=None if self.ids is None else self.ids[rows],
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return replace(self, features=features)

    def weights_or_ones(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights


def infer_schema(
    path: str | Path,
    label_column: Optional[str] = None,
    weight_column: Optional[str] = None,
    id_column: Optional[str] = None,
) -> Schema:
    """Schema taking every header column not claimed by another role as a feature."""
    header = _read_header(Path(path))
    roles = {label_column, weight_column, id_column} - {None}
    return Schema(
        feature_columns=tuple(c for c in header if c not in roles),
        label_column=label_column if label_column in header else None,
        weight_column=weight_column if weight_column in header else None,
        id_column=id_column if id_column in header else None,
    )


def _read_header(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            return [c.strip() for c in next(csv.reader(fh))]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None


def load_csv(path: str | Path, schema: Schema, domain: Domain | str = Domain.SOURCE) -> Dataset:
    """Read a headed CSV, selecting columns by name.

    Labels and weights are populated iff the schema names their columns.
    Row numbers in error messages are 1-based file lines (header is line 1).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None
        index = {name: i for i, name in enumerate(header)}
        wanted = list(schema.feature_columns)
        for col in (schema.label_column, schema.weight_column, schema.id_column):
            if col is not None:
                wanted.append(col)
        for col in wanted:
            if col not in index:
                raise SchemaError(f"{path}: missing column {col!r}")

        feat_idx = [index[c] for c in schema.feature_columns]
        rows, labels, weights, ids = [], [], [], []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(f"{path}: row {line_no} has {len(record)} fields, expected {len(header)}")
            try:
                rows.append([float(record[i]) for i in feat_idx])
            except ValueError:
                raise ParseError(f"{path}: non-numeric feature value in row {line_no}") from None
            if schema.label_column is not None:
                raw = record[index[schema.label_column]]
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(f"{path}: non-numeric label in row {line_no}") from None
                if value not in (0.0, 1.0):
                    raise ValidationError(f"{path}: label {raw!r} in row {line_no} is not 0 or 1")
                labels.append(int(value))
            if schema.weight_column is not None:
                try:
                    weights.append(float(record[index[schema.weight_column]]))
                except ValueError:
                    raise ParseError(f"{path}: non-numeric weight in row {line_no}") from None
            if schema.id_column is not None:
                ids.append(record[index[schema.id_column]])

    if not rows:
        raise ValidationError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        bad = int(np.argwhere(~np.isfinite(x))[0][0]) + 2
        raise ParseError(f"{path}: non-finite feature value in row {bad}")
    return Dataset(
        features=x,
        schema=schema,
        domain=Domain(domain),
        labels=np.array(labels, dtype=np.int64) if schema.label_column is not None else None,
        weights=np.array(weights) if schema.weight_column is not None else None,
        ids=np.array(ids) if schema.id_column is not None else None,
    )


def save_csv(ds: Dataset, path: str | Path) -> None:
    """Write ``ds`` with a header; floats use shortest round-trip repr."""
    schema = ds.schema
    header = list(schema.feature_columns)
    if schema.id_column is not None and ds.ids is not None:
        header = [schema.id_column] + header
    if schema.label_column is not None and ds.labels is not None:
        header.append(schema.label_column)
    if schema.weight_column is not None and ds.weights is not None:
        header.append(schema.weight_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            if schema.id_column is not None and ds.ids is not None:
                row.insert(0, str(ds.ids[i]))
            if schema.label_column is not None and ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            if schema.weight_column is not None and ds.weights is not None:
                row.append(repr(float(ds.weights[i])))
            writer.writerow(row)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != scale.shape:
            raise ShapeError(f"mean {mean.shape} and scale {scale.shape} must be equal-length vectors")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale)) and np.all(scale > 0)):
            raise ValidationError("standardizer needs finite mean and positive finite scale")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    def transform(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.mean.shape[0]:
            raise ShapeError(f"standardizer expects {self.mean.shape[0]} features, got shape {x.shape}")
        return add_row(x, -self.mean) / self.scale[np.newaxis, :]

    def inverse(self, z: np.ndarray) -> np.ndarray:
        if z.ndim != 2 or z.shape[1] != self.mean.shape[0]:
            raise ShapeError(f"standardizer expects {self.mean.shape[0]} features, got shape {z.shape}")
        return add_row(z * self.scale[np.newaxis, :], self.mean)

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(np.array(data["mean"], dtype=np.float64), np.array(data["scale"], dtype=np.float64))


def fit_standardizer(ds: Dataset) -> Standardizer:
    """Unweighted per-feature mean and population std (weights are ignored)."""
    if ds.n < 2:
        raise InsufficientDataError(f"need at least 2 rows to fit a standardizer, got {ds.n}")
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    scale = np.where(std < MIN_SCALE, 1.0, std)
    return Standardizer(mean, scale)


def apply_standardizer(std: Standardizer, ds: Dataset) -> Dataset:
    return ds.with_features(std.transform(ds.features))


def split(ds: Dataset, train_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Random partition; the train part gets ``floor(n * train_fraction)`` rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    order = rng.permutation(ds.n)
    n_train = math.floor(ds.n * train_fraction)
    if n_train < 1 or n_train >= ds.n:
        raise InsufficientDataError(f"cannot split {ds.n} rows at fraction {train_fraction}")
    return ds.take(order[:n_train]), ds.take(order[n_train:])


def batch_indices(n: int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """One epoch of row indices: a fresh shuffle cut into ceil(n / batch_size) pieces."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def batches(ds: Dataset, batch_size: int, rng: Rng) -> list[Dataset]:
    return [ds.take(idx) for idx in batch_indices(ds.n, batch_size, rng)]


def concat(parts: Sequence[Dataset]) -> Dataset:
    """Stack datasets sharing a schema and domain."""
    first = parts[0]
    for p in parts[1:]:
        if p.schema != first.schema or p.domain != first.domain:
            raise SchemaError("can only concatenate datasets with equal schema and domain")

    def stack(attr):
        values = [getattr(p, attr) for p in parts]
        if any(v is None for v in values):
            return None
        return np.concatenate(values)

    return Dataset(
        features=np.vstack([p.features for p in parts]),
        schema=first.schema,
        domain=first.domain,
        labels=stack("labels"),
        weights=stack("weights"),
        ids=stack("ids"),
    )
