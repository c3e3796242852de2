"""Datasets: synthetic generators, CSV round-tripping, standardization.

Features and targets are standardized with statistics computed on the
training split only; the statistics ride along on the Dataset so
predictions can be mapped back to raw units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DataError

__all__ = ["Dataset", "Standardizer", "standardize_splits", "save_csv",
           "load_csv", "synth_dataset", "GENERATORS"]

_SCALE_FLOOR = 1e-8


@dataclass
class Standardizer:
    """Affine map statistics for features and target."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> "Standardizer":
        x_scale = np.maximum(X.std(axis=0), _SCALE_FLOOR)
        y_scale = max(float(y.std()), _SCALE_FLOOR)
        return cls(X.mean(axis=0), x_scale, float(y.mean()), y_scale)

    def apply(self, X: np.ndarray, y: np.ndarray):
        return (X - self.x_mean) / self.x_scale, (y - self.y_mean) / self.y_scale

    def invert_y(self, y_std: np.ndarray) -> np.ndarray:
        return y_std * self.y_scale + self.y_mean

    def destandardize_mean_var(self, mean, var):
        """Map predictive (mean, variance) in standardized units to raw ones."""
        return (np.asarray(mean) * self.y_scale + self.y_mean,
                np.asarray(var) * self.y_scale ** 2)


@dataclass
class Dataset:
    """(X, y) pairs plus optional standardization stats and provenance."""

    X: np.ndarray
    y: np.ndarray
    stats: Standardizer | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DataError(
                f"y shape {self.y.shape} does not match X rows {self.X.shape[0]}")
        if self.X.shape[0] == 0:
            raise DataError("dataset is empty")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def standardize_splits(train: Dataset, *others: Dataset):
    """Standardize with train-split statistics; others get the same map."""
    stats = Standardizer.fit(train.X, train.y)
    out = []
    for ds in (train, *others):
        Xs, ys = stats.apply(ds.X, ds.y)
        out.append(Dataset(Xs, ys, stats=stats, meta=dict(ds.meta)))
    return out[0] if not others else tuple(out)


def save_csv(dataset: Dataset, path) -> None:
    """Write raw values with full float precision (repr round-trip)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.n_features)] + ["y"])
        for xi, yi in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def _resolve_col(spec, header: list[str], path) -> int:
    if isinstance(spec, (int, np.integer)):
        idx = int(spec)
        if not -len(header) <= idx < len(header):
            raise DataError(f"{path}: column index {idx} out of range "
                            f"for {len(header)} columns")
        return idx % len(header)
    if isinstance(spec, str):
        if spec not in header:
            raise DataError(f"{path}: no column named {spec!r}; "
                            f"header has {header}")
        return header.index(spec)
    raise DataError(f"{path}: column spec must be int or str, got {spec!r}")


def load_csv(path, target_col="y", feature_cols=None,
             train_fraction: float = 0.8):
    """Read a CSV with header, split, and standardize on the train part.

    Returns (train, test) Datasets in standardized units. The first
    ``round(train_fraction * n)`` rows form the train split. Missing or
    non-numeric cells raise DataError naming the row and column.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    y_idx = _resolve_col(target_col, header, path)
    if feature_cols is None:
        x_idx = [i for i in range(len(header)) if i != y_idx]
    else:
        x_idx = [_resolve_col(c, header, path) for c in feature_cols]
        if y_idx in x_idx:
            raise DataError(f"{path}: target column {header[y_idx]!r} "
                            "also listed as a feature")
    if not x_idx:
        raise DataError(f"{path}: no feature columns")

    def parse(row_no, row, col):
        if col >= len(row) or row[col].strip() == "":
            raise DataError(f"{path}: missing value at row {row_no}, "
                            f"column {header[col]!r}")
        try:
            return float(row[col])
        except ValueError:
            raise DataError(
                f"{path}: non-numeric value {row[col]!r} at row {row_no}, "
                f"column {header[col]!r}") from None

    X = np.array([[parse(r + 2, row, c) for c in x_idx]
                  for r, row in enumerate(rows)])
    y = np.array([parse(r + 2, row, y_idx) for r, row in enumerate(rows)])
    n_train = int(round(train_fraction * len(rows)))
    if n_train < 1 or n_train >= len(rows):
        raise DataError(
            f"{path}: split {train_fraction} leaves an empty part "
            f"({n_train} train rows of {len(rows)})")
    meta = {"source": str(path), "train_fraction": train_fraction}
    train = Dataset(X[:n_train], y[:n_train], meta=meta)
    test = Dataset(X[n_train:], y[n_train:], meta=meta)
    return standardize_splits(train, test)


# ---------------------------------------------------------------------------
# synthetic generators (raw units; standardization happens at split time)

def _gen_hetero_sine(gen: np.random.Generator, n: int, noise_scale=1.0):
    """sin(2 pi x) with input-dependent noise sd 0.05 + 0.2 x^2 on [-1, 1]."""
    x = gen.uniform(-1.0, 1.0, size=n)
    sd = noise_scale * (0.05 + 0.2 * x ** 2)
    y = np.sin(2.0 * np.pi * x) + sd * gen.standard_normal(n)
    meta = {"noise": "heteroscedastic", "noise_scale": noise_scale}
    return x[:, None], y, meta


def _gen_bimodal_weight(gen: np.random.Generator, n: int, weight=1.5,
                        noise_sd=0.1):
    """y = |w| x + eps on x in [0.5, 1.5]; the sign of w is unidentified."""
    x = gen.uniform(0.5, 1.5, size=n)
    y = abs(weight) * x + noise_sd * gen.standard_normal(n)
    meta = {"weight": float(weight), "noise_sd": noise_sd}
    return x[:, None], y, meta


def _gen_linear_spectra(gen: np.random.Generator, n: int, n_features=40,
                        noise_sd=0.05):
    """Linear response to smooth correlated features (AR(1), rho 0.9)."""
    rho = 0.9
    X = np.empty((n, n_features))
    X[:, 0] = gen.standard_normal(n)
    innov = gen.standard_normal((n, n_features - 1)) * np.sqrt(1 - rho ** 2)
    for j in range(1, n_features):
        X[:, j] = rho * X[:, j - 1] + innov[:, j - 1]
    beta = gen.normal(0.0, 1.0 / np.sqrt(n_features), size=n_features)
    y = X @ beta + noise_sd * gen.standard_normal(n)
    meta = {"beta": beta.tolist(), "noise_sd": noise_sd, "rho": rho}
    return X, y, meta


GENERATORS = {
    "hetero_sine": _gen_hetero_sine,
    "bimodal_weight": _gen_bimodal_weight,
    "linear_spectra": _gen_linear_spectra,
}


def synth_dataset(name: str, n: int, seed: int = 0, **params) -> Dataset:
    """Draw n rows from a named generator; same seed, same rows."""
    if name not in GENERATORS:
        raise DataError(f"unknown generator {name!r}; "
                        f"options: {sorted(GENERATORS)}")
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    gen = rng.stream(seed, "data", name)
    try:
        X, y, meta = GENERATORS[name](gen, n, **params)
    except TypeError as err:
        raise DataError(f"bad parameters for generator {name!r}: {err}") from err
    meta.update({"generator": name, "seed": seed, "n": n})
    return Dataset(X, y, meta=meta)
