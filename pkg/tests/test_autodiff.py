"""Tape engine gradcheck against central differences plus convention tests."""

import numpy as np
import pytest

from growthbound import ops
from growthbound.autodiff import (
    Tape,
    Tensor,
    _unbroadcast,
    as_tensor,
    concatenate,
    inverse,
    log_softmax,
    matmul,
    stack,
)
from growthbound.errors import DimensionError, NumericError
from growthbound.oracles import FdConfig, fd_gradient


def _gradcheck(build, x0, rtol=1e-6, atol=1e-8):
    """Compare tape gradients of scalar build(x) with central differences."""
    x0 = np.asarray(x0, dtype=np.float64)
    with Tape() as tape:
        x = Tensor(x0)
        y = build(x)
        (gx,) = tape.gradients(y, [x])

    def f(z):
        return float(ops.value_of(build(Tensor(z.reshape(x0.shape)))))

    fd = fd_gradient(f, x0.ravel(), FdConfig(step=1e-5))
    assert not fd.flagged.any(), "gradcheck point hit a kink; pick another"
    np.testing.assert_allclose(gx.ravel(), fd.jacobian, rtol=rtol, atol=atol)


RNG = np.random.default_rng(20240811)


class TestGradcheck:
    def test_elementwise_chain(self):
        x0 = RNG.normal(size=6)
        _gradcheck(lambda x: (ops.sigmoid(x) * ops.tanh(x) + x * x).sum(), x0, rtol=1e-5)

    def test_division_and_pow(self):
        x0 = RNG.normal(size=4) + 3.0
        _gradcheck(lambda x: ((x ** 3) / (x + 1.0)).sum(), x0, rtol=1e-5)

    def test_exp_log(self):
        x0 = np.abs(RNG.normal(size=5)) + 0.5
        _gradcheck(lambda x: (ops.exp(-x) + ops.log(x)).mean(), x0, rtol=1e-5)

    def test_matmul_matrix_matrix(self):
        a0 = RNG.normal(size=(3, 4))
        b = RNG.normal(size=(4, 2))
        _gradcheck(lambda a: (matmul(a.reshape((3, 4)), as_tensor(b)) ** 2).sum(),
                   a0.ravel(), rtol=1e-5)

    def test_matmul_vector_cases(self):
        m = RNG.normal(size=(3, 3))
        v0 = RNG.normal(size=3)
        _gradcheck(lambda v: matmul(as_tensor(m), v).sum(), v0, rtol=1e-5)
        _gradcheck(lambda v: matmul(v, as_tensor(m)).sum(), v0, rtol=1e-5)
        _gradcheck(lambda v: matmul(v, v), v0, rtol=1e-5)

    def test_matmul_batched(self):
        a0 = RNG.normal(size=(2, 3, 4))
        b = RNG.normal(size=(4, 5))
        _gradcheck(
            lambda a: (matmul(a.reshape((2, 3, 4)), as_tensor(b))).sum(),
            a0.ravel(),
            rtol=1e-5,
        )

    def test_reductions_and_reshape(self):
        x0 = RNG.normal(size=12)
        _gradcheck(
            lambda x: (x.reshape((3, 4)).sum(axis=0) * 2.0).mean(), x0, rtol=1e-5
        )

    def test_max_reduction(self):
        x0 = np.array([0.3, -1.0, 2.5, 0.9, 2.49])
        _gradcheck(lambda x: x.max() * 3.0, x0)
        _gradcheck(lambda x: x.reshape((1, 5)).max(axis=1).sum(), x0)

    def test_abs_maximum_minimum(self):
        x0 = np.array([0.4, -0.7, 1.3, -2.2])
        _gradcheck(lambda x: ops.absolute(x).sum(), x0)
        _gradcheck(lambda x: ops.maximum(x, 0.1).sum(), x0)
        _gradcheck(lambda x: ops.minimum(x * 2.0, 1.0).sum(), x0)

    def test_where(self):
        x0 = RNG.normal(size=5)
        mask = np.array([True, False, True, True, False])
        _gradcheck(lambda x: ops.where(mask, x * 3.0, x * x).sum(), x0, rtol=1e-5)

    def test_getitem_slice_and_fancy(self):
        x0 = RNG.normal(size=6)
        _gradcheck(lambda x: x[2:5].sum(), x0)
        idx = np.array([0, 0, 3])
        _gradcheck(lambda x: x[idx].sum(), x0)

    def test_concatenate_and_stack(self):
        x0 = RNG.normal(size=6)
        _gradcheck(
            lambda x: concatenate([x[:2] * 2.0, x[2:]], axis=0).sum(), x0
        )
        _gradcheck(lambda x: stack([x, x * x], axis=0).sum(), x0, rtol=1e-5)

    def test_inverse(self):
        a0 = np.eye(3) * 2.0 + RNG.normal(size=(3, 3)) * 0.1
        _gradcheck(
            lambda a: (inverse(a.reshape((3, 3))) * np.arange(9.0).reshape(3, 3)).sum(),
            a0.ravel(),
            rtol=1e-4,
        )

    def test_log_softmax(self):
        x0 = RNG.normal(size=(2, 4)).ravel()
        w = RNG.normal(size=(2, 4))
        _gradcheck(
            lambda x: (log_softmax(x.reshape((2, 4)), axis=-1) * w).sum(),
            x0,
            rtol=1e-5,
        )

    def test_relu_and_sigmoid_tanh(self):
        x0 = np.array([0.5, -0.8, 1.7, -0.1])
        _gradcheck(lambda x: ops.relu(x).sum(), x0)
        _gradcheck(lambda x: ops.sigmoid(x * 2.0).sum(), x0, rtol=1e-5)
        _gradcheck(lambda x: ops.tanh(x + 0.3).sum(), x0, rtol=1e-5)


class TestTieConventions:
    """Kink/tie subgradient choices are part of the engine contract."""

    def _grad_of(self, build, x0):
        with Tape() as tape:
            x = Tensor(np.asarray(x0, dtype=np.float64))
            (g,) = tape.gradients(build(x), [x])
        return g

    def test_maximum_tie_goes_to_first(self):
        g = self._grad_of(lambda x: ops.maximum(x, x.value.copy()).sum(), [1.0, -2.0])
        np.testing.assert_allclose(g, [1.0, 1.0])

    def test_minimum_tie_goes_to_first(self):
        g = self._grad_of(lambda x: ops.minimum(x, x.value.copy()).sum(), [1.0, -2.0])
        np.testing.assert_allclose(g, [1.0, 1.0])

    def test_abs_at_zero_is_plus_one(self):
        g = self._grad_of(lambda x: ops.absolute(x).sum(), [0.0])
        np.testing.assert_allclose(g, [1.0])

    def test_relu_at_zero_is_one(self):
        g = self._grad_of(lambda x: ops.relu(x).sum(), [0.0])
        np.testing.assert_allclose(g, [1.0])

    def test_axis_max_tie_first_index(self):
        g = self._grad_of(lambda x: x.max(), [2.0, 2.0, 1.0])
        np.testing.assert_allclose(g, [1.0, 0.0, 0.0])
        g = self._grad_of(lambda x: x.reshape((1, 3)).max(axis=1).sum(), [2.0, 2.0, 1.0])
        np.testing.assert_allclose(g, [1.0, 0.0, 0.0])


class TestTapeMechanics:
    def test_one_backward_per_tape(self):
        with Tape() as tape:
            x = Tensor(np.array([1.0]))
            y = (x * x).sum()
            tape.gradients(y, [x])
            with pytest.raises(NumericError):
                tape.gradients(y, [x])

    def test_nonscalar_output_rejected(self):
        with Tape() as tape:
            x = Tensor(np.array([1.0, 2.0]))
            y = x * 2.0
            with pytest.raises(DimensionError):
                tape.gradients(y, [x])

    def test_gradient_accumulates_over_reuse(self):
        with Tape() as tape:
            x = Tensor(np.array([3.0]))
            y = (x * x + x * 2.0).sum()  # dy/dx = 2x + 2 = 8
            (g,) = tape.gradients(y, [x])
        np.testing.assert_allclose(g, [8.0])

    def test_untouched_leaf_gets_zeros(self):
        with Tape() as tape:
            x = Tensor(np.array([1.0]))
            z = Tensor(np.array([5.0, 6.0]))
            y = (x * 3.0).sum()
            gx, gz = tape.gradients(y, [x, z])
        np.testing.assert_allclose(gx, [3.0])
        np.testing.assert_allclose(gz, [0.0, 0.0])

    def test_no_tape_means_detached_constants(self):
        x = Tensor(np.array([1.0, 2.0]))
        y = ops.sigmoid(x * 2.0)
        assert y._vjp is None and y._parents == ()

    def test_nested_tapes_are_lifo(self):
        with Tape() as outer:
            x = Tensor(np.array([2.0]))
            y = (x * x).sum()
            with Tape() as inner:
                z = (x * 3.0).sum()
                (gz,) = inner.gradients(z, [x])
            np.testing.assert_allclose(gz, [3.0])
            # inner sweep accumulated into x.grad; outer sweep adds on top,
            # so grads within one leaf are only meaningful per fresh leaf.
            (gy,) = outer.gradients(y, [x])
        assert np.isfinite(gy).all()

    def test_numpy_defers_to_tensor(self):
        x = Tensor(np.array([1.0, 2.0]))
        out = np.array([1.0, 1.0]) + x
        assert isinstance(out, Tensor)
        out = np.array([2.0, 2.0]) * x
        assert isinstance(out, Tensor)


class TestUnbroadcast:
    def test_leading_axes_summed(self):
        g = np.ones((4, 3, 2))
        assert _unbroadcast(g, (3, 2)).shape == (3, 2)
        np.testing.assert_allclose(_unbroadcast(g, (3, 2)), np.full((3, 2), 4.0))

    def test_kept_singleton_axes_summed(self):
        g = np.ones((3, 2))
        np.testing.assert_allclose(_unbroadcast(g, (3, 1)), np.full((3, 1), 2.0))
        np.testing.assert_allclose(_unbroadcast(g, (1, 2)), np.full((1, 2), 3.0))

    def test_broadcast_gradients_through_ops(self):
        with Tape() as tape:
            col = Tensor(np.array([[1.0], [2.0]]))
            row = Tensor(np.array([10.0, 20.0, 30.0]))
            y = (col * row).sum()
            g_col, g_row = tape.gradients(y, [col, row])
        np.testing.assert_allclose(g_col, [[60.0], [60.0]])
        np.testing.assert_allclose(g_row, [3.0, 3.0, 3.0])
