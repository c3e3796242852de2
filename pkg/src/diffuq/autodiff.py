"""Vectorized reverse-mode automatic differentiation on numpy arrays.

A Tape records array-valued primitive operations; Tape.gradients runs the
reverse pass from a scalar output. Every public op accepts either Var or
plain ndarray inputs and returns the matching kind, so model code is written
once and works both under tracing and in fast plain-numpy evaluation.

Gradients are accumulated functionally (no in-place mutation of saved
buffers), and broadcasting is undone by summing over the broadcast axes.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _special

from .errors import DimensionError, NumericalError

__all__ = [
    "Tape", "Var", "value_of", "gradient_of",
    "add", "sub", "mul", "div", "neg", "power",
    "exp", "log", "sqrt", "erf", "square", "absolute",
    "array_sum", "mean", "matmul", "concatenate", "getitem", "reshape",
    "clip", "gelu", "layer_norm", "detach", "logsumexp",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)
_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)


class Var:
    """Handle to one node of a Tape. Immutable; holds the forward value."""

    __slots__ = ("tape", "index", "value")

    # keep numpy from treating a Var as an object scalar in `ndarray + Var`;
    # with this set, numpy defers to our reflected operators
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape})"

    # arithmetic sugar; all dispatch through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Operation record for one forward pass."""

    __slots__ = ("_parents", "_vjps")

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list = []

    def __len__(self):
        return len(self._parents)

    def _record(self, value, parents, vjp) -> Var:
        idx = len(self._parents)
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Var(self, idx, value)

    def var(self, value) -> Var:
        """Register a leaf (differentiable input)."""
        return self._record(np.asarray(value, dtype=np.float64), (), None)

    def gradients(self, output: Var, wrt: list[Var]) -> list[np.ndarray]:
        """d(output)/d(w) for each leaf w. ``output`` must be a finite scalar."""
        if not isinstance(output, Var) or output.tape is not self:
            raise ValueError("output is not a Var of this tape")
        if output.value.ndim != 0:
            raise DimensionError(
                f"gradients need a scalar output, got shape {output.value.shape}")
        if not np.isfinite(output.value):
            raise NumericalError(f"non-finite loss value: {output.value}")
        grads: list = [None] * len(self._parents)
        grads[output.index] = np.asarray(1.0)
        for i in range(output.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            vjp = self._vjps[i]
            if vjp is None:
                continue
            for parent, pg in zip(self._parents[i], vjp(g)):
                if grads[parent] is None:
                    grads[parent] = pg
                else:
                    grads[parent] = grads[parent] + pg
            grads[i] = None  # free intermediate buffers as we go
        out = []
        for w in wrt:
            if not isinstance(w, Var) or w.tape is not self:
                raise ValueError("wrt entries must be Vars of this tape")
            g = grads[w.index]
            if g is None:
                g = np.zeros_like(w.value)
            else:
                g = np.asarray(g)
                if not np.all(np.isfinite(g)):
                    raise NumericalError(
                        f"non-finite gradient for leaf of shape {w.value.shape}")
                if not g.flags.writeable:
                    g = g.copy()
            out.append(g)
        return out


def value_of(x) -> np.ndarray:
    """Underlying ndarray of a Var, or the input coerced to float64."""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def gradient_of(fn, *args):
    """Gradients of scalar ``fn(*args)`` at the given points."""
    tape = Tape()
    leaves = [tape.var(a) for a in args]
    out = fn(*leaves)
    if not isinstance(out, Var):
        raise ValueError("fn must return a Var built from its arguments")
    grads = tape.gradients(out, leaves)
    return grads[0] if len(leaves) == 1 else grads


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    g = np.asarray(g)
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(a, b, fwd, vjp_a, vjp_b):
    # fwd/vjp_* operate on plain ndarrays
    a_var = isinstance(a, Var)
    b_var = isinstance(b, Var)
    av = a.value if a_var else np.asarray(a, dtype=np.float64)
    bv = b.value if b_var else np.asarray(b, dtype=np.float64)
    out = fwd(av, bv)
    if not (a_var or b_var):
        return out
    if a_var and b_var and a.tape is not b.tape:
        raise ValueError("operands belong to different tapes")
    tape = a.tape if a_var else b.tape
    ash, bsh = av.shape, bv.shape
    if a_var and b_var:
        def vjp(g):
            return (_unbroadcast(vjp_a(g, av, bv, out), ash),
                    _unbroadcast(vjp_b(g, av, bv, out), bsh))
        return tape._record(out, (a.index, b.index), vjp)
    if a_var:
        def vjp(g):
            return (_unbroadcast(vjp_a(g, av, bv, out), ash),)
        return tape._record(out, (a.index,), vjp)

    def vjp(g):
        return (_unbroadcast(vjp_b(g, av, bv, out), bsh),)
    return tape._record(out, (b.index,), vjp)


def _unary(x, fwd, vjp):
    if isinstance(x, Var):
        out = fwd(x.value)
        xv = x.value
        return x.tape._record(out, (x.index,),
                              lambda g: (vjp(g, xv, out),))
    return fwd(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b):
    return _binary(a, b, np.add, lambda g, av, bv, o: g, lambda g, av, bv, o: g)


def sub(a, b):
    return _binary(a, b, np.subtract,
                   lambda g, av, bv, o: g, lambda g, av, bv, o: -g)


def mul(a, b):
    return _binary(a, b, np.multiply,
                   lambda g, av, bv, o: g * bv, lambda g, av, bv, o: g * av)


def div(a, b):
    return _binary(a, b, np.divide,
                   lambda g, av, bv, o: g / bv, lambda g, av, bv, o: -g * o / bv)


def neg(x):
    return _unary(x, np.negative, lambda g, xv, o: -g)


def power(x, exponent):
    """x ** p for a constant scalar exponent p."""
    p = float(exponent)
    return _unary(x, lambda v: v ** p,
                  lambda g, xv, o: g * p * xv ** (p - 1.0))


def exp(x):
    return _unary(x, np.exp, lambda g, xv, o: g * o)


def log(x):
    return _unary(x, np.log, lambda g, xv, o: g / xv)


def sqrt(x):
    return _unary(x, np.sqrt, lambda g, xv, o: g * 0.5 / o)


def erf(x):
    return _unary(x, _special.erf,
                  lambda g, xv, o: g * _TWO_OVER_SQRT_PI * np.exp(-xv * xv))


def square(x):
    return _unary(x, np.square, lambda g, xv, o: g * 2.0 * xv)


def absolute(x):
    return _unary(x, np.abs, lambda g, xv, o: g * np.sign(xv))


def clip(x, lo: float, hi: float):
    """Clamp to [lo, hi]; gradient is 1 inside the interval, 0 outside."""
    lo = float(lo)
    hi = float(hi)

    def vjp(g, xv, o):
        return g * ((xv >= lo) & (xv <= hi))

    return _unary(x, lambda v: np.clip(v, lo, hi), vjp)


# ---------------------------------------------------------------------------
# reductions and structure

def _sum_grad(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(np.asarray(g), shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        kshape = tuple(1 if i in axes else s for i, s in enumerate(shape))
        g = np.asarray(g).reshape(kshape)
    return np.broadcast_to(g, shape)


def array_sum(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        out = np.sum(x.value, axis=axis, keepdims=keepdims)
        shape = x.value.shape
        return x.tape._record(
            out, (x.index,),
            lambda g: (_sum_grad(g, shape, axis, keepdims),))
    return np.sum(np.asarray(x, dtype=np.float64), axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    xv = value_of(x)
    if axis is None:
        count = xv.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for a in axes:
            count *= xv.shape[a]
    return div(array_sum(x, axis=axis, keepdims=keepdims), float(count))


def matmul(a, b):
    """Matrix product with broadcasting over leading axes; operands >= 2-D."""
    av = value_of(a)
    bv = value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise DimensionError(
            f"matmul needs >=2-D operands, got {av.ndim}-D and {bv.ndim}-D")
    if av.shape[-1] != bv.shape[-2]:
        raise DimensionError(
            f"matmul inner dims differ: {av.shape} @ {bv.shape}")

    def vjp_a(g, av, bv, o):
        return g @ np.swapaxes(bv, -1, -2)

    def vjp_b(g, av, bv, o):
        return np.swapaxes(av, -1, -2) @ g

    return _binary(a, b, np.matmul, vjp_a, vjp_b)


def reshape(x, shape):
    if isinstance(x, Var):
        out = x.value.reshape(shape)
        orig = x.value.shape
        return x.tape._record(out, (x.index,),
                              lambda g: (np.asarray(g).reshape(orig),))
    return np.asarray(x, dtype=np.float64).reshape(shape)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice))
               or p is Ellipsis or p is None for p in parts)


def getitem(x, idx):
    if isinstance(x, Var):
        out = x.value[idx]
        xv = x.value

        if _is_basic_index(idx):
            def vjp(g):
                z = np.zeros_like(xv)
                z[idx] += g
                return (z,)
        else:
            def vjp(g):
                z = np.zeros_like(xv)
                np.add.at(z, idx, g)
                return (z,)
        return x.tape._record(np.asarray(out, dtype=np.float64), (x.index,), vjp)
    return np.asarray(x, dtype=np.float64)[idx]


def concatenate(parts, axis=-1):
    """Concatenate Vars and/or arrays; gradient splits back per part."""
    if not parts:
        raise DimensionError("concatenate needs at least one part")
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    var_parts = [(i, p) for i, p in enumerate(parts) if isinstance(p, Var)]
    if not var_parts:
        return out
    tape = var_parts[0][1].tape
    ax = axis % out.ndim
    offsets = np.cumsum([0] + [v.shape[ax] for v in values])

    def vjp(g):
        g = np.asarray(g)
        slots = []
        for i, _ in var_parts:
            sl = [slice(None)] * out.ndim
            sl[ax] = slice(offsets[i], offsets[i + 1])
            slots.append(g[tuple(sl)])
        return tuple(slots)

    return tape._record(out, tuple(p.index for _, p in var_parts), vjp)


# ---------------------------------------------------------------------------
# fused neural-net primitives

def _gelu_fwd(v):
    return v * (0.5 * (1.0 + _special.erf(v * _INV_SQRT2)))


def gelu(x):
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    if not isinstance(x, Var):
        return _gelu_fwd(np.asarray(x, dtype=np.float64))

    xv = x.value
    cdf = 0.5 * (1.0 + _special.erf(xv * _INV_SQRT2))

    def vjp(g):
        # reuse the forward cdf; erf is the expensive part
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xv * xv)
        return (np.asarray(g) * (cdf + xv * pdf),)

    return x.tape._record(xv * cdf, (x.index,), vjp)


def layer_norm(x, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance (no affine part).

    Uses the population variance of the row and then (var + eps) ** -0.5.
    """
    def fwd(v):
        mu = v.mean(axis=-1, keepdims=True)
        d = v - mu
        var = np.mean(d * d, axis=-1, keepdims=True)
        return d / np.sqrt(var + eps)

    if not isinstance(x, Var):
        return fwd(np.asarray(x, dtype=np.float64))

    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    d = xv - mu
    var = np.mean(d * d, axis=-1, keepdims=True)
    s = np.sqrt(var + eps)
    y = d / s

    def vjp(g):
        g = np.asarray(g)
        gd = (g - y * np.mean(g * y, axis=-1, keepdims=True)) / s
        return (gd - gd.mean(axis=-1, keepdims=True),)

    return x.tape._record(y, (x.index,), vjp)


def detach(x):
    """Value of ``x`` cut off from the tape (read-only view for Vars)."""
    if isinstance(x, Var):
        v = x.value.view()
        v.flags.writeable = False
        return v
    return np.asarray(x, dtype=np.float64)


def logsumexp(x, axis=-1):
    """log(sum(exp(x))) along ``axis`` with max-shift; gradient is softmax."""
    xv = value_of(x)
    m = np.max(xv, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = sub(x, m)
    s = array_sum(exp(shifted), axis=axis)
    return add(log(s), np.squeeze(m, axis=axis))
