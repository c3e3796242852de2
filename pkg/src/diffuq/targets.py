"""Target log-densities for posterior samplers.

A LogDensity wraps an unnormalized log-density that can be evaluated on a
batch of points (n, d), either traced on a Tape or on plain arrays, and
exposes batch gradients computed by reverse mode.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from . import autodiff as ad
from .autodiff import Tape
from .errors import DimensionError

__all__ = [
    "LogDensity", "gaussian_logp", "diag_gaussian", "full_gaussian",
    "neal_funnel", "smiley_face", "smiley_assign",
    "SMILEY_CENTERS", "SMILEY_SIGMAS", "SMILEY_WEIGHTS",
    "PosteriorTarget", "linear_regression_posterior",
    "conjugate_linear_posterior",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


class LogDensity:
    """Batch-evaluable log-density on R^dim (not necessarily normalized)."""

    def __init__(self, dim: int, logp_fn, name: str = ""):
        if dim < 1:
            raise DimensionError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self._logp_fn = logp_fn
        self.name = name

    def _check(self, theta):
        shape = theta.shape
        if shape[-1] != self.dim:
            raise DimensionError(
                f"{self.name or 'target'} lives on R^{self.dim}, "
                f"got points of dim {shape[-1]}")

    def logp(self, theta):
        """Log-density rows for theta of shape (n, d) or (d,). Var or array."""
        if isinstance(theta, ad.Var):
            self._check(theta)
            return self._logp_fn(theta)
        theta = np.asarray(theta, dtype=np.float64)
        self._check(theta)
        if theta.ndim == 1:
            return float(self._logp_fn(theta[None, :])[0])
        return self._logp_fn(theta)

    def grad_logp(self, theta: np.ndarray) -> np.ndarray:
        """d logp / d theta, same shape as ``theta`` (rows independent)."""
        theta = np.asarray(theta, dtype=np.float64)
        single = theta.ndim == 1
        pts = theta[None, :] if single else theta
        tape = Tape()
        leaf = tape.var(pts)
        total = ad.array_sum(self._logp_fn(leaf))
        grad = tape.gradients(total, [leaf])[0]
        return grad[0] if single else grad

    def __repr__(self):
        return f"LogDensity(dim={self.dim}, name={self.name!r})"


def gaussian_logp(theta, mean, var):
    """Normalized log N(theta; mean, diag(var)) per row; tape-compatible.

    ``var`` is a positive scalar or per-coordinate vector of variances.
    """
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0):
        raise ValueError(f"variances must be positive, got min {var.min()}")
    d = ad.value_of(theta).shape[-1]
    log_norm = 0.5 * float(np.sum(np.broadcast_to(np.log(2.0 * np.pi * var), (d,))))
    quad = ad.array_sum(ad.square(theta - mean) / var, axis=-1)
    return quad * -0.5 - log_norm


def diag_gaussian(mean, var) -> LogDensity:
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    return LogDensity(mean.shape[0],
                      lambda th: gaussian_logp(th, mean, var),
                      name="diag-gaussian")


def full_gaussian(mean, cov) -> LogDensity:
    """Normalized Gaussian with a full covariance matrix."""
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise DimensionError(f"cov shape {cov.shape} does not match dim {d}")
    chol = sla.cholesky(cov, lower=True)
    prec = sla.cho_solve((chol, True), np.eye(d))
    log_norm = 0.5 * (d * _LOG_2PI + 2.0 * float(np.sum(np.log(np.diag(chol)))))

    def logp(th):
        diff = th - mean
        quad = ad.array_sum(diff * ad.matmul(diff, prec), axis=-1)
        return quad * -0.5 - log_norm

    return LogDensity(d, logp, name="full-gaussian")


def neal_funnel(dim: int = 10) -> LogDensity:
    """Funnel: v ~ N(0, 9); x_i | v ~ N(0, e^v) for the other dim-1 coords."""
    if dim < 2:
        raise DimensionError(f"funnel needs dim >= 2, got {dim}")
    k = dim - 1

    def logp(th):
        v = th[..., 0]
        x = th[..., 1:]
        lp_v = ad.square(v) * (-1.0 / 18.0) - 0.5 * np.log(2.0 * np.pi * 9.0)
        quad = ad.array_sum(ad.square(x), axis=-1) * ad.exp(-v)
        lp_x = quad * -0.5 - 0.5 * k * _LOG_2PI - 0.5 * k * v
        return lp_v + lp_x

    return LogDensity(dim, logp, name="neal-funnel")


def _smiley_components():
    eyes = np.array([[-1.0, 1.0], [1.0, 1.0]])
    angles = np.deg2rad(np.linspace(200.0, 340.0, 8))
    mouth = 1.5 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    centers = np.vstack([eyes, mouth])
    sigmas = np.array([0.15, 0.15] + [0.12] * 8)
    weights = np.full(10, 0.1)
    return centers, sigmas, weights


SMILEY_CENTERS, SMILEY_SIGMAS, SMILEY_WEIGHTS = _smiley_components()


def smiley_face() -> LogDensity:
    """2-D Gaussian mixture shaped like a face: two eyes, an 8-blob mouth arc.

    Ten isotropic components with equal weight 1/10; eye blobs sit at
    (+-1, 1) with sigma 0.15, mouth blobs on a radius-1.5 arc spanning
    200..340 degrees with sigma 0.12.
    """
    centers, sigmas, weights = SMILEY_CENTERS, SMILEY_SIGMAS, SMILEY_WEIGHTS
    consts = np.log(weights) - np.log(2.0 * np.pi * sigmas ** 2)

    def logp(th):
        cols = []
        n = th.shape[0]
        for c, s2, const in zip(centers, sigmas ** 2, consts):
            quad = ad.array_sum(ad.square(th - c), axis=-1) * (-0.5 / s2)
            cols.append(ad.reshape(quad + const, (n, 1)))
        return ad.logsumexp(ad.concatenate(cols, axis=1), axis=-1)

    return LogDensity(2, logp, name="smiley-face")


def smiley_assign(samples: np.ndarray) -> np.ndarray:
    """Index of the nearest mixture component for each 2-D sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    d2 = np.sum((samples[:, None, :] - SMILEY_CENTERS[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


class PosteriorTarget(LogDensity):
    """Bayesian posterior over regression parameters with a N(0, I) prior.

    ``posterior_logp(theta, batch)`` evaluates prior + likelihood on the row
    subset ``batch`` with the likelihood sum rescaled by N/|batch|, an
    unbiased estimate of the full-data log-likelihood. ``logp`` uses the
    full dataset.

    ``center`` shifts the sampling coordinates: the density is evaluated at
    ``center + theta``, so a drift trained on the shifted target explores
    the posterior around a reference point (typically a MAP fit, whose
    tight basin is otherwise a long transport from the origin). Draws then
    live in offset space and must be mapped back as ``center + delta``.
    """

    def __init__(self, model, X, y, prior_var: float = 1.0, center=None):
        from .regression import HeteroModel  # local to avoid import cycles

        if not isinstance(model, HeteroModel):
            raise TypeError(f"model must be a HeteroModel, got {type(model)}")
        self.model = model
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DimensionError(
                f"need X (N, p) and y (N,), got {self.X.shape}, {self.y.shape}")
        if float(prior_var) <= 0:
            raise ValueError(f"prior_var must be positive, got {prior_var}")
        self.prior_var = float(prior_var)
        self.n_rows = self.X.shape[0]
        if center is not None:
            center = np.asarray(center, dtype=np.float64)
            if center.shape != (model.param_dim,):
                raise DimensionError(
                    f"center must have shape ({model.param_dim},), "
                    f"got {center.shape}")
        self.center = center
        super().__init__(model.param_dim, lambda th: self.posterior_logp(th),
                         name="posterior")

    def posterior_logp(self, theta, batch=None):
        from .regression import loglik

        if batch is None:
            X, y, scale = self.X, self.y, 1.0
        else:
            batch = np.asarray(batch, dtype=np.intp)
            if batch.size == 0:
                raise ValueError("minibatch is empty")
            if batch.min() < 0 or batch.max() >= self.n_rows:
                raise IndexError(
                    f"minibatch indices out of range [0, {self.n_rows})")
            X, y = self.X[batch], self.y[batch]
            scale = self.n_rows / batch.size
        if self.center is not None:
            theta = theta + self.center
        ll = ad.array_sum(loglik(self.model, theta, X, y), axis=-1)
        prior = gaussian_logp(theta, np.zeros(self.dim), self.prior_var)
        return ll * scale + prior


def linear_regression_posterior(X, y, noise_var: float,
                                prior_var: float = 1.0) -> LogDensity:
    """Posterior over weights of y = X beta + eps with known noise variance.

    eps ~ N(0, noise_var), prior beta ~ N(0, prior_var I). The exact answer
    is the Gaussian returned by conjugate_linear_posterior, which makes this
    a ground-truthed sampler target.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionError(f"need X (N, p) and y (N,), got {X.shape}, {y.shape}")
    if noise_var <= 0 or prior_var <= 0:
        raise ValueError("noise_var and prior_var must be positive")
    Xt = X.T.copy()

    def logp(th):
        resid = ad.matmul(th, Xt) - y
        fit = ad.array_sum(ad.square(resid), axis=-1) * (-0.5 / noise_var)
        prior = ad.array_sum(ad.square(th), axis=-1) * (-0.5 / prior_var)
        return fit + prior

    return LogDensity(X.shape[1], logp, name="linear-regression")


def conjugate_linear_posterior(X, y, noise_var: float,
                               prior_var: float = 1.0):
    """Exact (mean, cov) of the linear_regression_posterior target."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    prec = X.T @ X / noise_var + np.eye(d) / prior_var
    chol = sla.cho_factor(prec)
    cov = sla.cho_solve(chol, np.eye(d))
    mean = sla.cho_solve(chol, X.T @ y / noise_var)
    return mean, cov
