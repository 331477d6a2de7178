"""Datasets, the stratified split, standardization and correlation-based selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SplitTooSmall(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


class FeatureMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with NaN marking absent values, plus binary labels."""

    feature_names: tuple
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(f"rows must have {len(self.feature_names)} columns, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("one label per row required")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("duplicate feature names")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @classmethod
    def from_records(cls, records, feature_names=None) -> "Dataset":
        records = list(records)
        if feature_names is None:
            if not records:
                raise ValueError("no records")
            feature_names = tuple(records[0].as_dict())
        rows = []
        for r in records:
            d = r.as_dict()
            rows.append([np.nan if d[n] is None else float(d[n]) for n in feature_names])
        if any(r.label is None for r in records):
            raise ValueError("every record needs a label")
        X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
        return cls(tuple(feature_names), X, np.array([r.label for r in records], dtype=np.int64))

    @classmethod
    def from_csv(cls, path, feature_names=None) -> "Dataset":
        from ..telemetry import read_dataset

        return cls.from_records(read_dataset(path), feature_names)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.feature_names, self.X[idx], self.y[idx])

    def select(self, names) -> "Dataset":
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise FeatureMismatch(f"dataset lacks features {missing}")
        cols = [self.feature_names.index(n) for n in names]
        return Dataset(tuple(names), self.X[:, cols], self.y)

    def complete_features(self) -> tuple:
        """Names of the features with no absent value."""
        ok = ~np.isnan(self.X).any(axis=0)
        return tuple(n for n, keep in zip(self.feature_names, ok) if keep)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        parts = (self.train, self.val, self.test)
        if any(p < 0 for p in parts) or abs(sum(parts) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {parts}")


def _cut(n: int, spec: SplitSpec) -> tuple[int, int]:
    n_train = math.floor(spec.train * n + 0.5)
    n_val = min(math.floor(spec.val * n + 0.5), n - n_train)
    return n_train, n_val


def split_indices(y, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded, disjoint, exhaustive partition; stratified by label unless disabled."""
    y = np.asarray(y)
    rng = np.random.default_rng(spec.seed)
    groups = [np.flatnonzero(y == c) for c in (0, 1)] if spec.stratified else [np.arange(len(y))]
    parts = ([], [], [])
    for g in groups:
        if len(g) == 0:
            continue
        g = rng.permutation(g)
        a, b = _cut(len(g), spec)
        for bucket, chunk in zip(parts, (g[:a], g[a:a + b], g[a + b:])):
            bucket.append(chunk)
    out = tuple(np.sort(np.concatenate(p)) if p else np.array([], dtype=np.int64) for p in parts)
    for name, idx in zip(("train", "val", "test"), out):
        if len(idx) == 0:
            raise SplitTooSmall(f"{name} split would be empty ({len(y)} rows, {spec})")
    return out


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    return tuple(ds.subset(idx) for idx in split_indices(ds.y, spec))


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature mean and population stddev; constant features pass through unscaled."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        if np.isnan(X).any():
            raise FeatureMismatch("absent values cannot be standardized")
        return cls(X.mean(axis=0), X.std(axis=0))

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        const = self.constant
        return np.where(const, X, (X - self.mean) / np.where(const, 1.0, self.std))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def pearson(a, b) -> float:
    """Pearson correlation; NaN if either side is constant or has absent values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or np.isnan(a).any() or np.isnan(b).any():
        return math.nan
    da, db = a - a.mean(), b - b.mean()
    den = math.sqrt(float(da @ da) * float(db @ db))
    if den == 0:
        return math.nan
    return max(-1.0, min(1.0, float(da @ db) / den))


@dataclass(frozen=True)
class Selection:
    selected: tuple
    names: tuple  # matrix axis: every feature, then the label
    matrix: np.ndarray
    threshold: float

    def label_correlation(self) -> dict:
        return dict(zip(self.names[:-1], self.matrix[-1, :-1].tolist()))

    def ranked(self) -> list[tuple[str, float]]:
        """Usable features ordered by decreasing |r| with the label."""
        pairs = [(n, r) for n, r in self.label_correlation().items() if not math.isnan(r)]
        return sorted(pairs, key=lambda p: (-abs(p[1]), p[0]))


def correlation_matrix(X, y=None) -> np.ndarray:
    cols = np.asarray(X, dtype=np.float64)
    if y is not None:
        cols = np.column_stack([cols, np.asarray(y, dtype=np.float64)])
    d = cols.shape[1]
    m = np.full((d, d), np.nan)
    for i in range(d):
        for j in range(i, d):
            m[i, j] = m[j, i] = pearson(cols[:, i], cols[:, j])
    return m


def correlation_select(train: Dataset, threshold: float = 0.3) -> Selection:
    """Keep features whose point-biserial |r| with the label reaches ``threshold``.

    Constant and partially absent features have an undefined correlation and
    are never selected.
    """
    if len(train) < 2:
        raise ValueError("correlation needs at least 2 rows")
    m = correlation_matrix(train.X, train.y)
    r = m[-1, :-1]
    keep = tuple(n for n, v in zip(train.feature_names, r) if not math.isnan(v) and abs(v) >= threshold)
    return Selection(keep, train.feature_names + ("label",), m, threshold)
