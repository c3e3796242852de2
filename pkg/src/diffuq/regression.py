"""Heteroscedastic Gaussian regression with network mean and precision.

The observation model is y | x, theta ~ N(mu(x), sigma^2(x)) with
mu = mean-net(x) and sigma^2 = exp(-z(x)) where z is the log-precision
net's output. Both nets read the same flat parameter vector
theta = [theta_mu, theta_z], so a posterior over theta is a posterior over
(mean function, noise function) jointly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionError
from .nets import NetLayout, mlp_forward, param_count

__all__ = ["HeteroModel", "LOG_PRECISION_BOUND", "preset",
           "mean_and_variance", "loglik"]

LOG_PRECISION_BOUND = 15.0

_LOG_2PI = float(np.log(2.0 * np.pi))
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeteroModel:
    """Pair of nets over a shared flat parameter vector."""

    mean_layout: NetLayout
    prec_layout: NetLayout

    def __post_init__(self):
        if self.mean_layout.output_dim != 1 or self.prec_layout.output_dim != 1:
            raise DimensionError("both nets must have scalar outputs")
        if self.mean_layout.input_dim != self.prec_layout.input_dim:
            raise DimensionError(
                f"nets disagree on input dim: {self.mean_layout.input_dim} "
                f"vs {self.prec_layout.input_dim}")

    @property
    def input_dim(self) -> int:
        return self.mean_layout.input_dim

    @property
    def mean_dim(self) -> int:
        return param_count(self.mean_layout)

    @property
    def prec_dim(self) -> int:
        return param_count(self.prec_layout)

    @property
    def param_dim(self) -> int:
        return self.mean_dim + self.prec_dim

    def split(self, theta):
        """(theta_mu, theta_z) views of the flat vector (works on Vars)."""
        k = self.mean_dim
        return theta[..., :k], theta[..., k:]

    def to_dict(self) -> dict:
        return {"mean_layout": self.mean_layout.to_dict(),
                "prec_layout": self.prec_layout.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "HeteroModel":
        return cls(NetLayout.from_dict(d["mean_layout"]),
                   NetLayout.from_dict(d["prec_layout"]))


def preset(name: str, input_dim: int) -> HeteroModel:
    """Named model sizes.

    "pensim": linear mean, log-precision net with one hidden layer of 4.
    "hlt":    mean net with one hidden layer of 32, log-precision net (4, 2).
    """
    if name == "pensim":
        return HeteroModel(
            NetLayout(input_dim, 1, ()),
            NetLayout(input_dim, 1, (4,)))
    if name == "hlt":
        return HeteroModel(
            NetLayout(input_dim, 1, (32,)),
            NetLayout(input_dim, 1, (4, 2)))
    raise ValueError(f"unknown model preset {name!r}; options: pensim, hlt")


def _squeeze_last(out):
    shape = out.shape
    return ad.reshape(out, shape[:-1])


def _forward_pair(model: HeteroModel, theta, x):
    """(mu, z) with shapes (m,) / (n, m) depending on theta's batching."""
    xv = ad.value_of(x)
    if xv.ndim == 1:
        xv = xv[None, :]
    if xv.shape[-1] != model.input_dim:
        raise DimensionError(
            f"model expects {model.input_dim} features, got {xv.shape[-1]}")
    theta_mu, theta_z = model.split(theta)
    mu = _squeeze_last(mlp_forward(model.mean_layout, theta_mu, xv))
    z = _squeeze_last(mlp_forward(model.prec_layout, theta_z, xv))
    return mu, z


def _clamp_log_precision(z):
    raw = ad.value_of(z)
    n_out = int(np.count_nonzero((raw < -LOG_PRECISION_BOUND)
                                 | (raw > LOG_PRECISION_BOUND)))
    if n_out:
        logger.debug("log-precision clamp active for %d of %d values",
                     n_out, raw.size)
    return ad.clip(z, -LOG_PRECISION_BOUND, LOG_PRECISION_BOUND)


def mean_and_variance(model: HeteroModel, theta, x):
    """Predicted mean mu(x) and noise variance sigma^2(x) under ``theta``.

    theta (d,) with x (m, p) gives (m,) outputs; theta (n, d) gives (n, m),
    one row per parameter sample. The variance is clamped to
    [exp(-15), exp(15)] through the log-precision bound.
    """
    mu, z = _forward_pair(model, theta, x)
    var = ad.exp(-_clamp_log_precision(z))
    return mu, var


def loglik(model: HeteroModel, theta, x, y):
    """Pointwise Gaussian log-likelihood log N(y; mu(x), sigma^2(x)).

    Shapes follow mean_and_variance: (m,) for one theta, (n, m) batched.
    """
    y = np.asarray(y, dtype=np.float64)
    mu, z = _forward_pair(model, theta, x)
    zc = _clamp_log_precision(z)
    resid2 = ad.square(mu - y)
    return (zc - _LOG_2PI) * 0.5 - resid2 * ad.exp(zc) * 0.5
