"""Dispatch layer so numeric code runs on ndarrays or autodiff Tensors.

All growth-bound and forward-pass math in this package is written against
this module.  When every operand is a plain numpy array the functions fall
through to numpy (fast path, also the only path that supports complex
dtypes).  When any operand is a :class:`~growthbound.autodiff.Tensor` the
corresponding tape primitive runs instead, so the very same formulas are
differentiable during training.  Keeping one implementation of the math and
letting the finite-difference oracle be the independent check avoids the
classic mistake of maintaining two half-trusted copies of the equations.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def value_of(x) -> np.ndarray:
    """The underlying ndarray, whether or not ``x`` is a Tensor."""
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def _any_tensor(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def maximum(a, b):
    if _any_tensor(a, b):
        return ad.maximum(ad.as_tensor(a), ad.as_tensor(b))
    return np.maximum(a, b)


def minimum(a, b):
    if _any_tensor(a, b):
        return ad.minimum(ad.as_tensor(a), ad.as_tensor(b))
    return np.minimum(a, b)


def absolute(a):
    if is_tensor(a):
        return ad.absolute(a)
    return np.abs(a)


def where(mask, a, b):
    if _any_tensor(a, b):
        return ad.where(mask, a, b)
    return np.where(mask, a, b)


def exp(a):
    return ad.exp(a) if is_tensor(a) else np.exp(a)


def log(a):
    return ad.log(a) if is_tensor(a) else np.log(a)


def tanh(a):
    return ad.tanh(a) if is_tensor(a) else np.tanh(a)


def sigmoid(a):
    if is_tensor(a):
        return ad.sigmoid(a)
    return ad._stable_sigmoid(np.asarray(a, dtype=np.float64))


def sigmoid_prime(a):
    s = sigmoid(a)
    return s * (1.0 - s)


def tanh_prime(a):
    t = tanh(a)
    return 1.0 - t * t


def relu(a):
    return ad.relu(a) if is_tensor(a) else np.maximum(a, 0.0)


def matmul(a, b):
    if _any_tensor(a, b):
        return ad.matmul(ad.as_tensor(a), ad.as_tensor(b))
    return a @ b


def concatenate(parts, axis=0):
    if _any_tensor(*parts):
        return ad.concatenate(list(parts), axis=axis)
    return np.concatenate(list(parts), axis=axis)


def stack(parts, axis=0):
    if _any_tensor(*parts):
        return ad.stack(list(parts), axis=axis)
    return np.stack(list(parts), axis=axis)


def sum_(a, axis=None, keepdims=False):
    if is_tensor(a):
        return a.sum(axis=axis, keepdims=keepdims)
    return np.sum(a, axis=axis, keepdims=keepdims)


def max_(a, axis=None, keepdims=False):
    if is_tensor(a):
        return a.max(axis=axis, keepdims=keepdims)
    return np.max(a, axis=axis, keepdims=keepdims)


def mean_(a, axis=None, keepdims=False):
    if is_tensor(a):
        return a.mean(axis=axis, keepdims=keepdims)
    return np.mean(a, axis=axis, keepdims=keepdims)


def log_softmax(a, axis=-1):
    if is_tensor(a):
        return ad.log_softmax(a, axis=axis)
    x = np.asarray(a, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def solve(a, b):
    """Solve ``a @ x = b``; the Tensor path goes through an explicit inverse."""
    if _any_tensor(a, b):
        return ad.matmul(ad.inverse(ad.as_tensor(a)), ad.as_tensor(b))
    return np.linalg.solve(a, b)


def reshape(a, shape):
    if is_tensor(a):
        return a.reshape(shape)
    return np.reshape(a, shape)


def pos_part(a):
    """max(a, 0), used by the sign-split affine bound."""
    return maximum(a, 0.0)


def neg_part(a):
    """min(a, 0), used by the sign-split affine bound."""
    return minimum(a, 0.0)
