"""Predictive distributions and calibration metrics for sample banks.

A bank of n parameter samples induces, at each input x, an equal-weight
Gaussian mixture over y with components N(mu_i(x), sigma_i^2(x)). All
metrics below are computed from that mixture: NLL by log-sum-exp over
components, central intervals and coverage through the mixture CDF, and
point scores from the mixture mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .errors import DimensionError, NumericalError
from .regression import HeteroModel, mean_and_variance

__all__ = ["PredictiveDistribution", "predictive", "predictive_grid",
           "mixture_cdf", "mixture_quantile", "interval_bounds", "nll",
           "coverage_levels", "coverage_curve", "ece_mce",
           "point_predictions", "regression_scores", "CalibrationReport",
           "evaluate"]

_LOG_2PI = float(np.log(2.0 * np.pi))
_QUANTILE_TOL = 1e-8


def _bank_array(bank) -> np.ndarray:
    samples = getattr(bank, "samples", bank)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise DimensionError(
            f"bank must hold samples of shape (n, d), got {samples.shape}")
    return samples


@dataclass
class PredictiveDistribution:
    """Equal-weight Gaussian mixture over a scalar response."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_1d(np.asarray(self.variances,
                                                  dtype=np.float64))
        if self.means.shape != self.variances.shape or self.means.ndim != 1:
            raise DimensionError(
                f"means/variances must be matching 1-D arrays, got "
                f"{self.means.shape} and {self.variances.shape}")
        if np.any(self.variances <= 0):
            raise NumericalError("predictive variances must be positive")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def mean(self) -> float:
        return float(self.means.mean())

    def variance(self) -> float:
        # law of total variance for the equal-weight mixture
        return float(self.variances.mean() + self.means.var())

    def logpdf(self, y) -> np.ndarray | float:
        y_arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        comp = (-0.5 * (y_arr[:, None] - self.means) ** 2 / self.variances
                - 0.5 * (np.log(self.variances) + _LOG_2PI))
        out = special.logsumexp(comp, axis=1) - np.log(self.n_components)
        return float(out[0]) if np.isscalar(y) else out

    def cdf(self, y) -> np.ndarray | float:
        out = mixture_cdf(self.means[:, None], self.variances[:, None],
                          np.atleast_1d(np.asarray(y, dtype=np.float64)))
        return float(out[0]) if np.isscalar(y) else out

    def quantile(self, p: float) -> float:
        q = mixture_quantile(self.means[:, None], self.variances[:, None],
                             p)
        return float(q[0])


def predictive_grid(bank, model: HeteroModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Component means/variances (n, m) for n samples at m inputs."""
    samples = _bank_array(bank)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mu, var = mean_and_variance(model, samples, X)
    return mu, var


def predictive(bank, model: HeteroModel, x) -> PredictiveDistribution:
    """Mixture over y at a single input point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    mu, var = predictive_grid(bank, model, x[None, :])
    return PredictiveDistribution(mu[:, 0], var[:, 0])


def mixture_cdf(means: np.ndarray, variances: np.ndarray,
                y: np.ndarray) -> np.ndarray:
    """CDF of the per-column mixture: means/variances (n, m), y (m,)."""
    z = (y - means) / np.sqrt(2.0 * variances)
    return np.mean(0.5 * (1.0 + special.erf(z)), axis=0)


def mixture_quantile(means: np.ndarray, variances: np.ndarray,
                     p: float) -> np.ndarray:
    """Per-column quantile of the mixture by bracketed bisection.

    The bracket starts at +-10 component standard deviations and doubles
    until it encloses the quantile; bisection then converges to within
    1e-8 in y.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {p}")
    sd = np.sqrt(variances)
    lo = np.min(means - 10.0 * sd, axis=0)
    hi = np.max(means + 10.0 * sd, axis=0)
    for _ in range(200):
        bad_lo = mixture_cdf(means, variances, lo) > p
        bad_hi = mixture_cdf(means, variances, hi) < p
        if not (bad_lo.any() or bad_hi.any()):
            break
        span = hi - lo
        lo = np.where(bad_lo, lo - span, lo)
        hi = np.where(bad_hi, hi + span, hi)
    else:
        raise NumericalError("quantile bracket failed to enclose the level")
    # fixed iteration count: each halving is monotone, 90 steps take any
    # finite bracket below the tolerance
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        below = mixture_cdf(means, variances, mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < _QUANTILE_TOL:
            break
    return 0.5 * (lo + hi)


def interval_bounds(means: np.ndarray, variances: np.ndarray,
                    level: float) -> tuple[np.ndarray, np.ndarray]:
    """Central interval endpoints at the given coverage level."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    alpha = 1.0 - level
    return (mixture_quantile(means, variances, alpha / 2.0),
            mixture_quantile(means, variances, 1.0 - alpha / 2.0))


def nll(bank, model: HeteroModel, test: Dataset) -> float:
    """Mean negative log predictive density over the test set."""
    mu, var = predictive_grid(bank, model, test.X)
    n = mu.shape[0]
    comp = (-0.5 * (test.y - mu) ** 2 / var
            - 0.5 * (np.log(var) + _LOG_2PI))
    lpd = special.logsumexp(comp, axis=0) - np.log(n)
    return float(-np.mean(lpd))


def coverage_levels(n_bins: int = 20) -> np.ndarray:
    """Interior nominal levels k / n_bins for k = 1 .. n_bins - 1."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    return np.arange(1, n_bins) / n_bins


def coverage_curve(means: np.ndarray, variances: np.ndarray,
                   targets: np.ndarray,
                   n_bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Empirical central-interval coverage at the interior nominal levels.

    y falls in the central level-p interval exactly when its mixture CDF
    value lies in [(1-p)/2, (1+p)/2], so one CDF evaluation per test point
    serves every level.
    """
    targets = np.asarray(targets, dtype=np.float64)
    levels = coverage_levels(n_bins)
    pit = mixture_cdf(means, variances, targets)
    alpha = 1.0 - levels
    inside = ((pit[:, None] >= alpha / 2.0)
              & (pit[:, None] <= 1.0 - alpha / 2.0))
    return levels, inside.mean(axis=0)


def ece_mce(levels: np.ndarray, empirical: np.ndarray) -> tuple[float, float]:
    """Expected and maximum absolute gap between nominal and empirical."""
    levels = np.asarray(levels, dtype=np.float64)
    empirical = np.asarray(empirical, dtype=np.float64)
    if levels.shape != empirical.shape:
        raise DimensionError("levels and empirical coverage differ in shape")
    gaps = np.abs(empirical - levels)
    return float(gaps.mean()), float(gaps.max())


def point_predictions(means: np.ndarray) -> np.ndarray:
    """Mixture-mean point prediction per input column."""
    return np.asarray(means).mean(axis=0)


def regression_scores(pred: np.ndarray, targets: np.ndarray):
    """(mse, mae, r2); r2 is NaN when the targets have zero variance."""
    pred = np.asarray(pred, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if pred.shape != targets.shape:
        raise DimensionError(
            f"predictions {pred.shape} vs targets {targets.shape}")
    err = pred - targets
    mse = float(np.mean(err ** 2))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    r2 = math.nan if ss_tot == 0.0 else 1.0 - float(np.sum(err ** 2)) / ss_tot
    return mse, mae, r2


@dataclass
class CalibrationReport:
    """Calibration and accuracy summary of one method on one test set."""

    levels: np.ndarray
    coverage: np.ndarray
    ece: float
    mce: float
    nll: float
    mse: float
    mae: float
    r2: float
    n_test: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def none_if_nan(v):
            return None if not math.isfinite(v) else v

        return {"levels": [float(v) for v in self.levels],
                "coverage": [float(v) for v in self.coverage],
                "ece": self.ece, "mce": self.mce, "nll": self.nll,
                "mse": self.mse, "mae": self.mae,
                "r2": none_if_nan(self.r2),
                "n_test": self.n_test, "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationReport":
        r2 = d["r2"]
        return cls(levels=np.asarray(d["levels"]),
                   coverage=np.asarray(d["coverage"]),
                   ece=float(d["ece"]), mce=float(d["mce"]),
                   nll=float(d["nll"]), mse=float(d["mse"]),
                   mae=float(d["mae"]),
                   r2=math.nan if r2 is None else float(r2),
                   n_test=int(d["n_test"]), meta=d.get("meta", {}))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CalibrationReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def reliability_csv(self, path) -> None:
        """(nominal, empirical) rows for plotting the reliability curve."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("nominal,empirical\n")
            for lv, cv in zip(self.levels, self.coverage):
                fh.write(f"{float(lv)!r},{float(cv)!r}\n")


def evaluate(bank, model: HeteroModel, test: Dataset, n_bins: int = 20,
             meta: dict | None = None) -> CalibrationReport:
    """Full calibration report for a sample bank on a test split.

    When the test set carries standardization stats, predictions and
    targets are mapped back to raw units first; reported NLL/MSE/MAE then
    refer to the original scale of y.
    """
    mu, var = predictive_grid(bank, model, test.X)
    y = test.y
    if test.stats is not None:
        mu, var = test.stats.destandardize_mean_var(mu, var)
        y = test.stats.invert_y(y)
    n = mu.shape[0]
    comp = -0.5 * (y - mu) ** 2 / var - 0.5 * (np.log(var) + _LOG_2PI)
    nll_val = float(-np.mean(special.logsumexp(comp, axis=0) - np.log(n)))
    levels, cover = coverage_curve(mu, var, y, n_bins=n_bins)
    ece, mce = ece_mce(levels, cover)
    mse, mae, r2 = regression_scores(point_predictions(mu), y)
    return CalibrationReport(levels=levels, coverage=cover, ece=ece, mce=mce,
                             nll=nll_val, mse=mse, mae=mae, r2=r2,
                             n_test=len(test), meta=meta or {})
