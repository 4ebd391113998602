"""Scalar intervals, axis-aligned boxes and sound affine range bounds.

The growth-bound computations never track full polytopes: every quantity is
enclosed in either a scalar :class:`Interval` or a vector :class:`BoxInterval`
(independent per-coordinate ranges).  Soundness throughout the package reduces
to two primitives implemented here:

* the *sign-split* affine bound: for ``y = theta @ v + u @ h + b`` with ``v``
  and ``h`` ranging over boxes, split each weight into its positive and
  negative part and pair them with the matching box face, giving the exact
  coordinatewise range of the affine map;
* the four-products product bound for elementwise interval multiplication.

Both are written against :mod:`growthbound.ops`, so the same code produces
plain numpy bounds and tape-differentiable bounds during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import DimensionError, NumericError

# Plain ndarrays are used for all linear algebra; the aliases document intent
# in signatures without inventing a wrapper type.
Matrix = np.ndarray
Vector = np.ndarray


@dataclass(frozen=True)
class Interval:
    """A closed scalar interval ``[lo, hi]`` with ``lo <= hi``, both finite."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise NumericError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise NumericError(f"empty interval: lo={self.lo} > hi={self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol


@dataclass(frozen=True)
class BoxInterval:
    """An axis-aligned box: elementwise ``lo[i] <= x[i] <= hi[i]``.

    Both bounds are finite 1-D float64 arrays of equal length.  Instances are
    frozen; the arrays are copied and marked read-only on construction.
    """

    lo: Vector
    hi: Vector

    def __post_init__(self) -> None:
        lo = np.array(self.lo, dtype=np.float64, copy=True)
        hi = np.array(self.hi, dtype=np.float64, copy=True)
        if lo.ndim != 1 or hi.ndim != 1:
            raise DimensionError(
                f"box bounds must be 1-D, got shapes {lo.shape} and {hi.shape}"
            )
        if lo.shape != hi.shape:
            raise DimensionError(
                f"box bounds must match in length, got {lo.shape} and {hi.shape}"
            )
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise NumericError("box bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise NumericError(
                f"empty box at coordinate {bad}: lo={lo[bad]} > hi={hi[bad]}"
            )
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, v: Vector) -> "BoxInterval":
        """The degenerate box ``[v, v]``."""
        v = np.asarray(v, dtype=np.float64)
        return cls(v, v)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> Vector:
        return self.hi - self.lo

    @property
    def mid(self) -> Vector:
        return 0.5 * (self.lo + self.hi)

    def contains(self, v: Vector, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.lo.shape:
            raise DimensionError(f"point of shape {v.shape} vs box of dim {self.dim}")
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))

    def contains_box(self, other: "BoxInterval", tol: float = 0.0) -> bool:
        if other.dim != self.dim:
            raise DimensionError(f"box dims differ: {other.dim} vs {self.dim}")
        return bool(
            np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol)
        )

    def widen(self, radius) -> "BoxInterval":
        """Grow by ``radius`` (scalar or per-coordinate, nonnegative) on each side."""
        r = np.broadcast_to(np.asarray(radius, dtype=np.float64), self.lo.shape)
        if np.any(r < 0):
            raise NumericError("widen radius must be nonnegative")
        return BoxInterval(self.lo - r, self.hi + r)

    def inflate(self, factor: float) -> "BoxInterval":
        """Scale the box about its midpoint by ``factor >= 1``."""
        if factor < 1.0:
            raise NumericError(f"inflation factor must be >= 1, got {factor}")
        half = 0.5 * factor * self.width
        return BoxInterval(self.mid - half, self.mid + half)

    def sample(self, rng: np.random.Generator, n: int) -> Matrix:
        """Uniform points inside the box, shape ``(n, dim)``."""
        u = rng.random((n, self.dim))
        return self.lo + u * self.width


def mat_vec(m: Matrix, v: Vector) -> Vector:
    """Checked matrix-vector product."""
    m = np.asarray(m)
    v = np.asarray(v)
    if m.ndim != 2:
        raise DimensionError(f"mat_vec needs a matrix, got ndim={m.ndim}")
    if v.ndim != 1:
        raise DimensionError(f"mat_vec needs a vector, got ndim={v.ndim}")
    if m.shape[1] != v.shape[0]:
        raise DimensionError(f"shape mismatch: {m.shape} @ {v.shape}")
    return m @ v


def affine_bounds(theta, v_lo, v_hi, u=None, h_lo=None, h_hi=None, bias=None):
    """Sign-split range of ``theta @ v (+ u @ h) (+ bias)`` over boxes.

    Returns ``(lo, hi)``.  Works on ndarrays or Tensors; weight matrices are
    treated as exact (point) values.  The bound is exact per coordinate: each
    output coordinate is a monotone function of every input once the weight
    sign is fixed, so pairing positive parts with one box face and negative
    parts with the other attains the extremes.
    """
    tp, tn = ops.pos_part(theta), ops.neg_part(theta)
    lo = ops.matmul(tp, v_lo) + ops.matmul(tn, v_hi)
    hi = ops.matmul(tp, v_hi) + ops.matmul(tn, v_lo)
    if u is not None:
        up, un = ops.pos_part(u), ops.neg_part(u)
        lo = lo + ops.matmul(up, h_lo) + ops.matmul(un, h_hi)
        hi = hi + ops.matmul(up, h_hi) + ops.matmul(un, h_lo)
    if bias is not None:
        lo = lo + bias
        hi = hi + bias
    return lo, hi


def mul_bounds(a_lo, a_hi, b_lo, b_hi):
    """Elementwise interval product: range of ``a * b`` from the four corner products."""
    p1 = a_lo * b_lo
    p2 = a_lo * b_hi
    p3 = a_hi * b_lo
    p4 = a_hi * b_hi
    lo = ops.minimum(ops.minimum(p1, p2), ops.minimum(p3, p4))
    hi = ops.maximum(ops.maximum(p1, p2), ops.maximum(p3, p4))
    return lo, hi


def abs_bound(lo, hi):
    """max(|x|) for ``x`` in ``[lo, hi]``, elementwise."""
    return ops.maximum(ops.absolute(lo), ops.absolute(hi))


def interval_affine(theta: Matrix, u: Matrix, bias: Vector, v: BoxInterval, h: BoxInterval) -> BoxInterval:
    """Exact coordinatewise range of ``theta @ v + u @ h + bias`` over two boxes."""
    theta = np.asarray(theta, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if theta.ndim != 2 or u.ndim != 2 or bias.ndim != 1:
        raise DimensionError(
            f"expected matrices and a bias vector, got shapes {theta.shape}, {u.shape}, {bias.shape}"
        )
    if theta.shape[0] != u.shape[0] or theta.shape[0] != bias.shape[0]:
        raise DimensionError(
            f"output dims disagree: theta {theta.shape}, u {u.shape}, bias {bias.shape}"
        )
    if theta.shape[1] != v.dim:
        raise DimensionError(f"theta {theta.shape} vs v box of dim {v.dim}")
    if u.shape[1] != h.dim:
        raise DimensionError(f"u {u.shape} vs h box of dim {h.dim}")
    lo, hi = affine_bounds(theta, v.lo, v.hi, u, h.lo, h.hi, bias)
    return BoxInterval(lo, hi)
