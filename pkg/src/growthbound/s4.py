"""Exact growth bounds for a discretized linear state-space (S4-style) cell.

The continuous system ``h' = A h + B v, y = C h + D v`` is discretized with
the bilinear (Tustin) transform at step ``Delta``:

    A_bar = (I - Delta/2 A)^-1 (I + Delta/2 A)
    B_bar = (I - Delta/2 A)^-1 Delta B
    C_bar = C,  D_bar = D

and one cell step is ``h = A_bar h_prev + B_bar v``, ``y = C_bar h + D_bar v``.
Because the step is linear, the Jacobian is constant and the growth bound
matrix is exact, entrywise:

    dy/dv      = C_bar B_bar + D_bar
    dy/dh_prev = C_bar A_bar

``Delta`` may be a scalar (shared across the state) or one value per input
channel; in the per-channel case the state is laid out channel-major in
blocks of ``n // d0`` and each block uses its channel's step, which is the
block-diagonal view of running ``d0`` independent systems.

Complex ``A, B, C`` are supported on the plain-numpy path (the growth bound
is the modulus); the differentiable training path is real-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import ops
from .errors import DimensionError, NumericError
from .gbm import Gbm
from .intervals import Matrix, Vector

COND_LIMIT = 1e12


@dataclass(frozen=True)
class S4ContinuousParams:
    """Continuous-time system matrices plus the discretization step."""

    a: Matrix
    b: Matrix
    c: Matrix
    d: Matrix
    delta: float | Vector

    def __post_init__(self) -> None:
        a = np.asarray(self.a)
        b = np.asarray(self.b)
        c = np.asarray(self.c)
        d = np.asarray(self.d)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"A must be square, got {a.shape}")
        n = a.shape[0]
        if b.ndim != 2 or b.shape[0] != n:
            raise DimensionError(f"B must be ({n}, d0), got {b.shape}")
        d0 = b.shape[1]
        if c.shape != (d0, n):
            raise DimensionError(f"C must be ({d0}, {n}), got {c.shape}")
        if d.shape != (d0, d0):
            raise DimensionError(f"D must be ({d0}, {d0}), got {d.shape}")
        for name, m in (("A", a), ("B", b), ("C", c), ("D", d)):
            if not np.all(np.isfinite(m)):
                raise NumericError(f"{name} contains non-finite entries")
        delta = np.asarray(self.delta, dtype=np.float64)
        if delta.ndim == 0:
            if not (np.isfinite(delta) and delta > 0):
                raise NumericError(f"Delta must be positive and finite, got {delta}")
        elif delta.ndim == 1:
            if delta.shape[0] != d0:
                raise DimensionError(
                    f"per-channel Delta needs {d0} entries, got {delta.shape[0]}"
                )
            if n % d0 != 0:
                raise DimensionError(
                    f"per-channel Delta needs the state split into channel blocks, "
                    f"but n={n} is not a multiple of d0={d0}"
                )
            if not np.all(np.isfinite(delta)) or np.any(delta <= 0):
                raise NumericError("all Delta entries must be positive and finite")
        else:
            raise DimensionError(f"Delta must be a scalar or 1-D, got ndim={delta.ndim}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "delta", delta)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d0(self) -> int:
        return self.b.shape[1]


@dataclass(frozen=True)
class S4DiscreteParams:
    """Discrete-time system matrices; one step is ``h = A h_prev + B v, y = C h + D v``."""

    a_bar: Matrix
    b_bar: Matrix
    c_bar: Matrix
    d_bar: Matrix

    @property
    def n(self) -> int:
        return self.a_bar.shape[0]

    @property
    def d0(self) -> int:
        return self.b_bar.shape[1]


def _state_step(delta, n: int, d0: int):
    """Per-state-coordinate step sizes (channel-major block expansion)."""
    dval = ops.value_of(delta)
    if np.ndim(dval) == 0:
        return delta
    block = n // d0
    # repeat each channel's Delta over its state block; written with matmul
    # and reshape so it also runs on Tensors.
    expanded = ops.matmul(ops.reshape(delta, (d0, 1)), np.ones((1, block)))
    return ops.reshape(expanded, (n,))


def discretize_arrays(arrays: Mapping[str, np.ndarray], n: int, d0: int):
    """Bilinear transform on a dict with keys ``a, b, c, d, delta``.

    Returns ``(a_bar, b_bar, c_bar, d_bar)``; raises :class:`NumericError`
    when ``I - Delta/2 A`` is numerically singular.
    """
    a, b = arrays["a"], arrays["b"]
    step = _state_step(arrays["delta"], n, d0)
    half = step * 0.5
    scaled_a = ops.reshape(half, (n, 1)) * a if np.ndim(ops.value_of(half)) else half * a
    eye = np.eye(n)
    lhs = eye - scaled_a
    cond = np.linalg.cond(ops.value_of(lhs))
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise NumericError(
            f"bilinear transform is ill-conditioned: cond(I - Delta/2 A) = {cond:.3e}"
        )
    rhs_b = ops.reshape(step, (n, 1)) * b if np.ndim(ops.value_of(step)) else step * b
    a_bar = ops.solve(lhs, eye + scaled_a)
    b_bar = ops.solve(lhs, rhs_b)
    return a_bar, b_bar, arrays["c"], arrays["d"]


def bilinear_discretize(params: S4ContinuousParams) -> S4DiscreteParams:
    """Discretize the continuous system with the bilinear transform."""
    a_bar, b_bar, c_bar, d_bar = discretize_arrays(
        {"a": params.a, "b": params.b, "c": params.c, "d": params.d, "delta": params.delta},
        params.n,
        params.d0,
    )
    return S4DiscreteParams(a_bar=a_bar, b_bar=b_bar, c_bar=c_bar, d_bar=d_bar)


def s4_step_arrays(a_bar, b_bar, c_bar, d_bar, v, h_prev):
    """One discrete step on ndarrays or Tensors; broadcasts over batch axes."""
    h = ops.matmul(h_prev, _t(a_bar)) + ops.matmul(v, _t(b_bar))
    y = ops.matmul(h, _t(c_bar)) + ops.matmul(v, _t(d_bar))
    return y, h


def _t(m):
    return m.T if ops.is_tensor(m) else np.asarray(m).T


def s4_cell_forward(params: S4DiscreteParams, v: Vector, h_prev: Vector) -> tuple[Vector, Vector]:
    """One step for single vectors; returns ``(y, h)``."""
    v = np.asarray(v)
    h_prev = np.asarray(h_prev)
    if v.shape != (params.d0,):
        raise DimensionError(f"v shape {v.shape}, expected ({params.d0},)")
    if h_prev.shape != (params.n,):
        raise DimensionError(f"h shape {h_prev.shape}, expected ({params.n},)")
    return s4_step_arrays(params.a_bar, params.b_bar, params.c_bar, params.d_bar, v, h_prev)


def gbm_s4(params: S4DiscreteParams) -> Gbm:
    """The exact growth bound matrix of ``y`` w.r.t. ``[v | h_prev]``.

    The cell is affine, so these are the exact absolute Jacobian entries
    (modulus for complex systems), not just upper bounds.
    """
    dv = np.abs(params.c_bar @ params.b_bar + params.d_bar)
    dh = np.abs(params.c_bar @ params.a_bar)
    matrix = np.concatenate([dv, dh], axis=1).astype(np.float64)
    d0, n = params.d0, params.n
    return Gbm(matrix, (("v", 0, d0), ("h", d0, d0 + n)))


def state_transition_magnitudes(params: S4DiscreteParams) -> tuple[Matrix, Matrix]:
    """``(|A_bar|, |B_bar|)`` for chaining state perturbations through time."""
    return np.abs(params.a_bar).astype(np.float64), np.abs(params.b_bar).astype(np.float64)


def gbm_s4_penalty(arrays: Mapping[str, np.ndarray], n: int, d0: int):
    """Sum of GBM entries, differentiable w.r.t. Tensor-valued system matrices."""
    a_bar, b_bar, c_bar, d_bar = discretize_arrays(arrays, n, d0)
    dv = ops.absolute(ops.matmul(c_bar, b_bar) + d_bar)
    dh = ops.absolute(ops.matmul(c_bar, a_bar))
    return ops.sum_(dv) + ops.sum_(dh)
