"""Fully connected networks evaluated from flat parameter vectors.

Parameters live in a single 1-D float64 vector (or an (n, d) batch of n such
vectors), packed layer by layer as weights row-major then biases. Keeping
parameters flat is what lets samplers treat a whole network as a point in
R^d, and lets one forward pass evaluate n sampled networks at once via
broadcast matmul.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, gelu, layer_norm
from .errors import DimensionError

__all__ = ["NetLayout", "param_count", "init_params", "mlp_forward",
           "gelu", "layer_norm"]

_ACTIVATIONS = ("gelu", "identity")


@dataclass(frozen=True)
class NetLayout:
    """Architecture description: dims, hidden widths, activation, layernorm.

    ``layernorm=True`` normalizes each hidden pre-activation row (no learned
    affine part) before the activation is applied.
    """

    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = ()
    activation: str = "gelu"
    layernorm: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1:
            raise DimensionError(
                f"layout dims must be positive, got in={self.input_dim} "
                f"out={self.output_dim}")
        if any(w < 1 for w in self.hidden):
            raise DimensionError(f"hidden widths must be positive: {self.hidden}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}; options: {_ACTIVATIONS}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    def layer_sizes(self) -> list[tuple[int, int]]:
        w = self.widths
        return [(w[i], w[i + 1]) for i in range(len(w) - 1)]

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "output_dim": self.output_dim,
                "hidden": list(self.hidden), "activation": self.activation,
                "layernorm": self.layernorm}

    @classmethod
    def from_dict(cls, d: dict) -> "NetLayout":
        return cls(input_dim=int(d["input_dim"]), output_dim=int(d["output_dim"]),
                   hidden=tuple(d.get("hidden", ())),
                   activation=d.get("activation", "gelu"),
                   layernorm=bool(d.get("layernorm", False)))


def param_count(layout: NetLayout) -> int:
    return sum(fi * fo + fo for fi, fo in layout.layer_sizes())


def init_params(layout: NetLayout, seed_or_rng) -> np.ndarray:
    """Weights ~ N(0, 1/fan_in), biases 0, packed flat."""
    rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
           else np.random.default_rng(seed_or_rng))
    chunks = []
    for fi, fo in layout.layer_sizes():
        chunks.append(rng.normal(0.0, 1.0 / np.sqrt(fi), size=fi * fo))
        chunks.append(np.zeros(fo))
    return np.concatenate(chunks)


def _check_params(layout: NetLayout, params) -> None:
    shape = params.shape if isinstance(params, (Var, np.ndarray)) else np.shape(params)
    if len(shape) not in (1, 2):
        raise DimensionError(f"params must be 1-D or 2-D, got shape {shape}")
    expected = param_count(layout)
    if shape[-1] != expected:
        per_layer = [f"layer {i}: {fi}x{fo}+{fo}"
                     for i, (fi, fo) in enumerate(layout.layer_sizes())]
        raise DimensionError(
            f"params last dim is {shape[-1]}, layout needs {expected} "
            f"({'; '.join(per_layer)})")


def _unpack(layout: NetLayout, params):
    """Per-layer (W, b) with shapes (..., fi, fo) and broadcast-ready bias."""
    batched = len(params.shape) == 2
    n = params.shape[0] if batched else None
    layers = []
    offset = 0
    for fi, fo in layout.layer_sizes():
        w_flat = params[..., offset:offset + fi * fo]
        offset += fi * fo
        b = params[..., offset:offset + fo]
        offset += fo
        if batched:
            w = ad.reshape(w_flat, (n, fi, fo))
            b = ad.reshape(b, (n, 1, fo))
        else:
            w = ad.reshape(w_flat, (fi, fo))
        layers.append((w, b))
    return layers


def mlp_forward(layout: NetLayout, params, x):
    """Evaluate the network; works on Vars and plain arrays alike.

    Accepted shapes (p = input_dim, q = output_dim, d = param_count):
      params (d,),   x (p,)    -> (q,)
      params (d,),   x (m, p)  -> (m, q)
      params (n, d), x (m, p)  -> (n, m, q)   all n nets on the same inputs
    """
    if not isinstance(params, Var):
        params = np.asarray(params, dtype=np.float64)
    _check_params(layout, params)
    xv = ad.value_of(x)
    single = xv.ndim == 1
    if xv.shape[-1] != layout.input_dim:
        raise DimensionError(
            f"input layer expects {layout.input_dim} features, got "
            f"{xv.shape[-1]} (x shape {xv.shape})")
    if single:
        x = ad.reshape(x, (1, layout.input_dim))
    h = x
    layers = _unpack(layout, params)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = ad.matmul(h, w) + b
        if i != last:
            if layout.layernorm:
                h = layer_norm(h)
            if layout.activation == "gelu":
                h = gelu(h)
    if single:
        h = ad.reshape(h, (layout.output_dim,))
    return h
