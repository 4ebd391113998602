"""Tight ranges of sigmoid/tanh values and derivatives over an interval.

Both activations are monotone increasing, so value ranges are just the
endpoint images.  Their derivatives are unimodal bumps peaking at zero
(``sigmoid'`` peaks at 1/4, ``tanh'`` at 1), so over ``[a, b]``:

* the derivative minimum sits at whichever endpoint is farther from zero,
  hence ``min(phi'(a), phi'(b))``;
* the derivative maximum is the peak value when ``0 in [a, b]`` and the
  larger endpoint derivative otherwise.

These are exact ranges, not just sound bounds.  The array variants accept
ndarrays or autodiff Tensors (elementwise intervals) and are what the
growth-bound code calls; the scalar wrappers are the validated public API.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import ops
from .errors import DimensionError
from .intervals import Interval


class ActivationKind(Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"


_DERIVATIVE_PEAK = {ActivationKind.SIGMOID: 0.25, ActivationKind.TANH: 1.0}


def _apply(kind: ActivationKind, x):
    if kind is ActivationKind.SIGMOID:
        return ops.sigmoid(x)
    if kind is ActivationKind.TANH:
        return ops.tanh(x)
    raise DimensionError(f"unknown activation kind: {kind!r}")


def _apply_prime(kind: ActivationKind, x):
    if kind is ActivationKind.SIGMOID:
        return ops.sigmoid_prime(x)
    if kind is ActivationKind.TANH:
        return ops.tanh_prime(x)
    raise DimensionError(f"unknown activation kind: {kind!r}")


def value_bounds_arrays(kind: ActivationKind, lo, hi):
    """Elementwise range of the activation value over ``[lo, hi]``."""
    return _apply(kind, lo), _apply(kind, hi)


def derivative_bounds_arrays(kind: ActivationKind, lo, hi):
    """Elementwise range of the activation derivative over ``[lo, hi]``."""
    d_lo = _apply_prime(kind, lo)
    d_hi = _apply_prime(kind, hi)
    out_lo = ops.minimum(d_lo, d_hi)
    straddles_zero = (ops.value_of(lo) <= 0.0) & (ops.value_of(hi) >= 0.0)
    peak = _DERIVATIVE_PEAK[kind]
    out_hi = ops.where(straddles_zero, peak + 0.0 * d_lo, ops.maximum(d_lo, d_hi))
    return out_lo, out_hi


def value_bounds(kind: ActivationKind, a: Interval) -> Interval:
    """Range of sigmoid/tanh over the scalar interval ``a``."""
    lo, hi = value_bounds_arrays(kind, np.asarray(a.lo), np.asarray(a.hi))
    return Interval(float(lo), float(hi))


def derivative_bounds(kind: ActivationKind, a: Interval) -> Interval:
    """Range of the sigmoid/tanh derivative over the scalar interval ``a``."""
    lo, hi = derivative_bounds_arrays(kind, np.asarray(a.lo), np.asarray(a.hi))
    return Interval(float(lo), float(hi))
