"""Signal preprocessing: smoothed derivatives and grid resampling.

The derivative filter fits a low-order polynomial by least squares inside a
sliding window and reads off the fitted slope at the window center, which
suppresses high-frequency noise that plain finite differences would
amplify. Edge positions refit on the truncated window that remains inside
the signal instead of padding.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = ["savgol_derivative", "resample_uniform"]


def _derivative_row(offsets: np.ndarray, polyorder: int) -> np.ndarray:
    """Least-squares weights mapping window values to the slope at offset 0."""
    order = min(polyorder, len(offsets) - 1)
    basis = np.vander(offsets.astype(np.float64), order + 1, increasing=True)
    return np.linalg.pinv(basis)[1]


def savgol_derivative(signal, window: int = 15, polyorder: int = 2,
                      delta: float = 1.0) -> np.ndarray:
    """First derivative of a uniformly sampled signal, same length as input.

    ``window`` must be odd; ``delta`` is the sample spacing. Exact for
    polynomials up to degree ``polyorder``.
    """
    y = np.asarray(signal, dtype=np.float64)
    if y.ndim != 1:
        raise DimensionError(f"signal must be 1-D, got shape {y.shape}")
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if not 1 <= polyorder < window:
        raise ValueError(
            f"polyorder must be in [1, window), got {polyorder}")
    if y.size < window:
        raise DimensionError(
            f"signal length {y.size} is shorter than the window {window}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    half = window // 2
    out = np.empty_like(y)
    center_row = _derivative_row(np.arange(-half, half + 1), polyorder)
    # correlation of the signal with the weight row, valid positions only
    out[half:y.size - half] = np.convolve(y, center_row[::-1], mode="valid")
    for i in range(half):
        offsets = np.arange(-i, half + 1)
        out[i] = _derivative_row(offsets, polyorder) @ y[:i + half + 1]
        j = y.size - 1 - i
        offsets = np.arange(-half, i + 1)
        out[j] = _derivative_row(offsets, polyorder) @ y[j - half:]
    return out / delta


def resample_uniform(x, y, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation of (x, y) onto n evenly spaced points.

    ``x`` must be strictly increasing; the new grid spans [x[0], x[-1]].
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(
            f"x and y must be matching 1-D arrays, got {x.shape}, {y.shape}")
    if x.size < 2:
        raise DimensionError("need at least two points to resample")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    grid = np.linspace(x[0], x[-1], n)
    return grid, np.interp(grid, x, y)
