"""Activation value/derivative ranges against dense-grid extrema."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthbound.activations import (
    ActivationKind,
    derivative_bounds,
    derivative_bounds_arrays,
    value_bounds,
    value_bounds_arrays,
)
from growthbound.autodiff import Tape, Tensor
from growthbound.errors import NumericError
from growthbound.intervals import Interval
from growthbound.oracles import grid_minmax


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def _sigmoid_prime(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _tanh_prime(x):
    t = np.tanh(x)
    return 1.0 - t * t


class TestFrozenExamples:
    def test_sigmoid_derivative_over_minus1_2(self):
        out = derivative_bounds(ActivationKind.SIGMOID, Interval(-1.0, 2.0))
        # interval straddles 0, so the max is the peak 1/4; the min is at the
        # endpoint farther from 0.
        np.testing.assert_allclose(out.lo, 0.10499358540350662, rtol=1e-12)
        np.testing.assert_allclose(out.hi, 0.25, rtol=0)

    def test_tanh_derivative_over_half_to_three_halves(self):
        out = derivative_bounds(ActivationKind.TANH, Interval(0.5, 1.5))
        np.testing.assert_allclose(out.lo, 0.18070663892364836, rtol=1e-12)
        np.testing.assert_allclose(out.hi, 0.7864477329659274, rtol=1e-12)

    def test_value_bounds_are_endpoint_images(self):
        out = value_bounds(ActivationKind.TANH, Interval(-1.0, 1.0))
        np.testing.assert_allclose(out.lo, np.tanh(-1.0))
        np.testing.assert_allclose(out.hi, np.tanh(1.0))
        out = value_bounds(ActivationKind.SIGMOID, Interval(0.0, 2.0))
        np.testing.assert_allclose(out.lo, 0.5)
        np.testing.assert_allclose(out.hi, _sigmoid(2.0))


@settings(max_examples=80, deadline=None)
@given(
    st.sampled_from(list(ActivationKind)),
    st.floats(-6.0, 6.0),
    st.floats(0.0, 8.0),
)
def test_derivative_bounds_match_grid_extrema(kind, lo, width):
    hi = lo + width
    phi = _sigmoid_prime if kind is ActivationKind.SIGMOID else _tanh_prime
    got = derivative_bounds(kind, Interval(lo, hi))
    grid_lo, grid_hi = grid_minmax(phi, lo, hi, n=20001)
    # sound: encloses the grid extrema
    assert got.lo <= grid_lo + 1e-12
    assert got.hi >= grid_hi - 1e-12
    # tight: within grid resolution of them
    assert got.lo >= grid_lo - 1e-6
    assert got.hi <= grid_hi + 1e-6


@settings(max_examples=80, deadline=None)
@given(
    st.sampled_from(list(ActivationKind)),
    st.floats(-6.0, 6.0),
    st.floats(0.0, 8.0),
)
def test_value_bounds_match_grid_extrema(kind, lo, width):
    hi = lo + width
    phi = _sigmoid if kind is ActivationKind.SIGMOID else np.tanh
    got = value_bounds(kind, Interval(lo, hi))
    grid_lo, grid_hi = grid_minmax(phi, lo, hi, n=20001)
    np.testing.assert_allclose(got.lo, grid_lo, atol=1e-12)
    np.testing.assert_allclose(got.hi, grid_hi, atol=1e-12)


def test_peak_hit_exactly_when_zero_inside():
    assert derivative_bounds(ActivationKind.SIGMOID, Interval(-3.0, 1.0)).hi == 0.25
    assert derivative_bounds(ActivationKind.TANH, Interval(0.0, 2.0)).hi == 1.0
    # zero outside: strictly below the peak
    assert derivative_bounds(ActivationKind.SIGMOID, Interval(0.5, 2.0)).hi < 0.25


def test_stable_sigmoid_extreme_arguments():
    from growthbound import ops

    with np.errstate(over="raise"):
        lo, hi = value_bounds_arrays(
            ActivationKind.SIGMOID, np.array([-800.0]), np.array([800.0])
        )
    assert 0.0 <= lo[0] < 1e-300
    assert hi[0] == 1.0
    assert ops.sigmoid(np.array([0.0]))[0] == 0.5


def test_array_bounds_vectorized():
    lo = np.array([-1.0, 0.5])
    hi = np.array([2.0, 1.5])
    d_lo, d_hi = derivative_bounds_arrays(ActivationKind.SIGMOID, lo, hi)
    one = derivative_bounds(ActivationKind.SIGMOID, Interval(-1.0, 2.0))
    two = derivative_bounds(ActivationKind.SIGMOID, Interval(0.5, 1.5))
    np.testing.assert_allclose(d_lo, [one.lo, two.lo])
    np.testing.assert_allclose(d_hi, [one.hi, two.hi])


def test_bounds_differentiable_through_tape():
    """The same bound code must run on Tensors and agree with the numpy path."""
    lo_v = np.array([-1.0, 0.2])
    hi_v = np.array([0.5, 1.3])
    ref_lo, ref_hi = derivative_bounds_arrays(ActivationKind.TANH, lo_v, hi_v)
    with Tape() as tape:
        lo_t, hi_t = Tensor(lo_v), Tensor(hi_v)
        b_lo, b_hi = derivative_bounds_arrays(ActivationKind.TANH, lo_t, hi_t)
        total = b_lo.sum() + b_hi.sum()
        grads = tape.gradients(total, [lo_t, hi_t])
    np.testing.assert_allclose(b_lo.value, ref_lo)
    np.testing.assert_allclose(b_hi.value, ref_hi)
    assert all(np.all(np.isfinite(g)) for g in grads)


def test_degenerate_interval():
    out = derivative_bounds(ActivationKind.TANH, Interval(0.7, 0.7))
    np.testing.assert_allclose(out.lo, out.hi)
    np.testing.assert_allclose(out.lo, _tanh_prime(0.7))


def test_invalid_interval_rejected():
    with pytest.raises(NumericError):
        derivative_bounds(ActivationKind.SIGMOID, Interval(2.0, 1.0))
