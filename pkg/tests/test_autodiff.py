import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from diffuq import autodiff as ad
from diffuq.autodiff import Tape
from diffuq.errors import DimensionError, NumericalError

from conftest import fd_grad


def tape_grad(fn, x):
    tape = Tape()
    leaf = tape.var(x)
    return tape.gradients(fn(leaf), [leaf])[0]


def check_against_fd(fn, x, rtol=1e-5, atol=1e-7):
    g = tape_grad(fn, x)
    # plain arrays run through the same dispatch functions
    g_fd = fd_grad(lambda v: float(ad.value_of(fn(v))), x)
    np.testing.assert_allclose(g, g_fd, rtol=rtol, atol=atol)


class TestForwardValues:
    def test_plain_arrays_pass_through(self, rng):
        x = rng.normal(size=(3, 4))
        assert isinstance(ad.exp(x), np.ndarray)
        np.testing.assert_array_equal(ad.exp(x), np.exp(x))

    def test_arithmetic_matches_numpy(self, rng):
        x = rng.normal(size=(2, 3))
        y = rng.normal(size=(3,))
        tape = Tape()
        vx = tape.var(x)
        np.testing.assert_allclose((vx + y).value, x + y)
        np.testing.assert_allclose((vx * y).value, x * y)
        np.testing.assert_allclose((vx - y).value, x - y)
        np.testing.assert_allclose((vx / y).value, x / y)
        np.testing.assert_allclose((2.0 - vx).value, 2.0 - x)
        np.testing.assert_allclose((2.0 / vx).value, 2.0 / x)
        np.testing.assert_allclose((-vx).value, -x)
        np.testing.assert_allclose((vx ** 3).value, x ** 3)

    def test_gelu_frozen_values(self):
        # x * Phi(x) at x = 1 and x = -1, Phi from the Gaussian CDF
        np.testing.assert_allclose(ad.gelu(np.array([1.0]))[0],
                                   0.8413447460685429, rtol=1e-12)
        np.testing.assert_allclose(ad.gelu(np.array([-1.0]))[0],
                                   -0.15865525393145707, rtol=1e-12)
        assert ad.gelu(np.array([0.0]))[0] == 0.0

    def test_layer_norm_matches_manual(self, rng):
        x = rng.normal(size=(5, 7)) * 3 + 1
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        expected = (x - mu) / np.sqrt(var + 1e-5)
        np.testing.assert_allclose(ad.layer_norm(x), expected, rtol=1e-12)

    def test_logsumexp_matches_scipy(self, rng):
        x = rng.normal(size=(4, 6)) * 10
        np.testing.assert_allclose(ad.logsumexp(x, axis=-1),
                                   special.logsumexp(x, axis=-1), rtol=1e-12)

    def test_logsumexp_extreme_values(self):
        x = np.array([[1000.0, 999.0], [-1000.0, -1001.0]])
        got = ad.logsumexp(x, axis=-1)
        assert np.all(np.isfinite(got))
        np.testing.assert_allclose(got, special.logsumexp(x, axis=-1))


class TestGradients:
    def test_add_mul_broadcast(self, rng):
        x = rng.normal(size=(3, 1))
        y = rng.normal(size=(4,))
        check_against_fd(lambda v: ad.array_sum((v + y) * (v * 2.0 + 1.0)), x)

    def test_div(self, rng):
        x = rng.normal(size=(5,)) + 3.0
        check_against_fd(lambda v: ad.array_sum(ad.div(1.0, v) + v / 2.0), x)

    def test_unary_chain(self, rng):
        x = np.abs(rng.normal(size=(6,))) + 0.5
        check_against_fd(
            lambda v: ad.array_sum(ad.log(v) + ad.sqrt(v) * ad.exp(-v)), x)

    def test_erf_square_abs(self, rng):
        x = rng.normal(size=(7,)) + 0.1
        check_against_fd(
            lambda v: ad.array_sum(ad.erf(v) + ad.square(v) + ad.absolute(v)),
            x, atol=1e-6)

    def test_power(self, rng):
        x = np.abs(rng.normal(size=(4,))) + 1.0
        check_against_fd(lambda v: ad.array_sum(v ** 2.5), x)

    def test_clip_gradient_masks_outside(self):
        x = np.array([-2.0, 0.3, 2.0])
        g = tape_grad(lambda v: ad.array_sum(ad.clip(v, -1.0, 1.0)), x)
        np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])

    def test_sum_axis_keepdims(self, rng):
        x = rng.normal(size=(3, 4, 2))
        check_against_fd(
            lambda v: ad.array_sum(ad.square(
                ad.array_sum(v, axis=1, keepdims=True))), x)
        check_against_fd(
            lambda v: ad.array_sum(ad.square(ad.array_sum(v, axis=(0, 2)))), x)

    def test_mean(self, rng):
        x = rng.normal(size=(4, 3))
        g = tape_grad(lambda v: ad.mean(v), x)
        np.testing.assert_allclose(g, np.full_like(x, 1.0 / 12.0))

    def test_matmul(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        check_against_fd(lambda v: ad.array_sum(ad.square(ad.matmul(v, b))), a)
        check_against_fd(lambda v: ad.array_sum(ad.square(ad.matmul(a, v))), b)

    def test_matmul_batched_broadcast(self, rng):
        # (m, p) @ (n, p, h): stacked weights applied to shared inputs
        x = rng.normal(size=(5, 3))
        w = rng.normal(size=(4, 3, 2))
        check_against_fd(lambda v: ad.array_sum(ad.square(ad.matmul(x, v))), w)

    def test_matmul_rejects_vectors(self):
        with pytest.raises(DimensionError):
            ad.matmul(np.ones(3), np.ones((3, 2)))

    def test_getitem_slices(self, rng):
        x = rng.normal(size=(4, 5))
        check_against_fd(lambda v: ad.array_sum(ad.square(v[1:3, ::2])), x)
        check_against_fd(lambda v: ad.array_sum(v[..., 0] * v[..., 1]), x)

    def test_getitem_fancy_accumulates(self):
        x = np.array([1.0, 2.0, 3.0])
        idx = np.array([0, 0, 2])
        g = tape_grad(lambda v: ad.array_sum(v[idx]), x)
        np.testing.assert_array_equal(g, [2.0, 0.0, 1.0])

    def test_reshape_concat(self, rng):
        x = rng.normal(size=(6,))
        def fn(v):
            a = ad.reshape(v, (2, 3))
            joined = ad.concatenate([a, np.ones((2, 1)), a * 2.0], axis=1)
            return ad.array_sum(ad.square(joined))
        check_against_fd(fn, x)

    def test_gelu_grad(self, rng):
        x = rng.normal(size=(8,)) * 2
        check_against_fd(lambda v: ad.array_sum(ad.gelu(v)), x, atol=1e-6)

    def test_layer_norm_grad(self, rng):
        x = rng.normal(size=(3, 6)) * 2 + 1
        check_against_fd(
            lambda v: ad.array_sum(ad.square(ad.layer_norm(v)) * 0.5
                                   + ad.layer_norm(v) * 0.1), x, atol=1e-6)

    def test_logsumexp_grad_is_softmax(self, rng):
        x = rng.normal(size=(5,))
        g = tape_grad(lambda v: ad.logsumexp(ad.reshape(v, (1, 5)))[0], x)
        sm = np.exp(x - special.logsumexp(x))
        np.testing.assert_allclose(g, sm, rtol=1e-10)

    def test_reuse_accumulates(self):
        x = np.array([2.0])
        g = tape_grad(lambda v: ad.array_sum(v * v + v * 3.0), x)
        np.testing.assert_allclose(g, [2 * 2.0 + 3.0])

    def test_unused_leaf_gets_zeros(self):
        tape = Tape()
        a = tape.var(np.ones(3))
        b = tape.var(np.ones(2))
        out = ad.array_sum(ad.square(a))
        ga, gb = tape.gradients(out, [a, b])
        np.testing.assert_allclose(ga, 2.0 * np.ones(3))
        np.testing.assert_array_equal(gb, np.zeros(2))

    def test_detach_blocks_gradient(self):
        x = np.array([1.5, -0.5])
        g = tape_grad(lambda v: ad.array_sum(v * ad.detach(ad.square(v))), x)
        np.testing.assert_allclose(g, x ** 2)


class TestErrors:
    def test_non_scalar_output_rejected(self):
        tape = Tape()
        v = tape.var(np.ones(3))
        with pytest.raises(DimensionError):
            tape.gradients(v * 2.0, [v])

    def test_nan_loss_raises(self):
        tape = Tape()
        v = tape.var(np.array(-1.0))
        with np.errstate(invalid="ignore"), pytest.raises(NumericalError):
            tape.gradients(ad.log(v), [v])

    def test_mixed_tapes_rejected(self):
        t1, t2 = Tape(), Tape()
        a = t1.var(np.ones(2))
        b = t2.var(np.ones(2))
        with pytest.raises(ValueError):
            _ = a + b

    def test_gradient_of_requires_var_output(self):
        with pytest.raises(ValueError):
            ad.gradient_of(lambda v: 3.0, np.ones(2))


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    def test_logsumexp_dominates_max(self, vals):
        x = np.array(vals)[None, :]
        lse = float(ad.logsumexp(x, axis=-1)[0])
        assert lse >= x.max() - 1e-12
        assert lse <= x.max() + np.log(x.size) + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_layer_norm_standardizes_rows(self, seed):
        x = np.random.default_rng(seed).normal(size=(4, 9)) * 5 + 2
        y = ad.layer_norm(x)
        np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-10)
        np.testing.assert_allclose((y ** 2).mean(axis=-1), 1.0, atol=1e-3)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_gelu_between_zero_and_identity(self, seed):
        x = np.random.default_rng(seed).normal(size=32) * 3
        y = ad.gelu(x)
        assert np.all(y * np.sign(x) >= np.minimum(0.0, x * np.sign(x)) - 1e-12)
        pos = x > 0
        assert np.all(y[pos] <= x[pos])
        assert np.all(y[pos] >= 0.0)

    def test_gradient_of_convenience(self):
        g = ad.gradient_of(lambda v: ad.array_sum(ad.square(v)) * 0.5,
                           np.array([1.0, -2.0]))
        np.testing.assert_allclose(g, [1.0, -2.0])
