"""Minimal reverse-mode automatic differentiation over numpy arrays.

The engine is a classic tape: every operation that runs while a
:class:`Tape` is active appends its output node to the tape, so the list of
nodes in creation order is already a topological order of the graph.  A
backward sweep walks the tape once in reverse, and each node's vector-Jacobian
closure adds into its parents' ``grad`` buffers.  One backward sweep is
allowed per tape.

Subgradient conventions at kinks and ties (these are relied on by the
training tests, do not change casually):

* ``maximum(a, b)`` routes the gradient to ``a`` on ties (``a >= b``),
  ``minimum(a, b)`` likewise prefers ``a`` (``a <= b``).
* ``abs`` uses slope ``+1`` at zero, ``relu`` uses slope ``1`` at zero.
* axis reductions with ``max`` route the gradient to the first (lowest
  index) maximizer, matching ``np.argmax``.

Tensors created while no tape is active are detached constants: they hold a
value but record nothing, which makes plain numeric evaluation cheap.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError

_TAPE_STACK: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Records operations so gradients can be computed once, in reverse."""

    def __init__(self) -> None:
        self._nodes: list[Tensor] = []
        self._used = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must be exited in LIFO order"

    def gradients(self, output: "Tensor", wrt: "list[Tensor]") -> list[np.ndarray]:
        """Backward sweep from scalar ``output``; returns grads aligned with ``wrt``.

        Raises if called twice (one backward per forward) or if ``output``
        is not scalar-sized.
        """
        if self._used:
            raise NumericError("tape already consumed: one backward sweep per tape")
        self._used = True
        if output.value.size != 1:
            raise DimensionError(
                f"gradients() needs a scalar output, got shape {output.value.shape}"
            )
        output.grad = np.ones_like(output.value)
        for node in reversed(self._nodes):
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)
        return [
            w.grad if w.grad is not None else np.zeros_like(w.value) for w in wrt
        ]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy array plus the plumbing needed for reverse-mode gradients."""

    # Tell numpy to defer binary ops to Tensor's reflected dunders instead of
    # trying to ufunc-apply itself elementwise over the object.
    __array_ufunc__ = None

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, _parents=(), _vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._vjp = _vjp

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, value={self.value!r})"

    def item(self) -> float:
        return float(self.value)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value + other.value)

        def vjp(g, a=self, b=other):
            a._accum(_unbroadcast(g, a.value.shape))
            b._accum(_unbroadcast(g, b.value.shape))

        return _with_vjp(out, (self, other), vjp)

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value * other.value)

        def vjp(g, a=self, b=other):
            a._accum(_unbroadcast(g * b.value, a.value.shape))
            b._accum(_unbroadcast(g * a.value, b.value.shape))

        return _with_vjp(out, (self, other), vjp)

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor(-self.value)

        def vjp(g, a=self):
            a._accum(-g)

        return _with_vjp(out, (self,), vjp)

    def __sub__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value - other.value)

        def vjp(g, a=self, b=other):
            a._accum(_unbroadcast(g, a.value.shape))
            b._accum(_unbroadcast(-g, b.value.shape))

        return _with_vjp(out, (self, other), vjp)

    def __rsub__(self, other):
        return as_tensor(other).__sub__(self)

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value / other.value)

        def vjp(g, a=self, b=other):
            a._accum(_unbroadcast(g / b.value, a.value.shape))
            b._accum(_unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

        return _with_vjp(out, (self, other), vjp)

    def __rtruediv__(self, other):
        return as_tensor(other).__truediv__(self)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise DimensionError("Tensor ** only supports python scalars")
        out = Tensor(self.value ** p)

        def vjp(g, a=self, p=float(p)):
            a._accum(g * p * a.value ** (p - 1.0))

        return _with_vjp(out, (self,), vjp)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def __getitem__(self, idx):
        out = Tensor(self.value[idx])

        def vjp(g, a=self, idx=idx):
            buf = np.zeros_like(a.value)
            np.add.at(buf, idx, g)
            a._accum(buf)

        return _with_vjp(out, (self,), vjp)

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = Tensor(self.value.reshape(shape))

        def vjp(g, a=self):
            a._accum(g.reshape(a.value.shape))

        return _with_vjp(out, (self,), vjp)

    def transpose(self, axes=None):
        out = Tensor(np.transpose(self.value, axes))
        inv = None if axes is None else np.argsort(axes)

        def vjp(g, a=self, inv=inv):
            a._accum(np.transpose(g, inv))

        return _with_vjp(out, (self,), vjp)

    @property
    def T(self):
        return self.transpose()

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.value.sum(axis=axis, keepdims=keepdims))

        def vjp(g, a=self, axis=axis, keepdims=keepdims):
            if axis is None:
                a._accum(np.broadcast_to(g, a.value.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.value.shape).copy())

        return _with_vjp(out, (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.value.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.value.shape[ax] for ax in axis]))
        else:
            n = self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis=None, keepdims=False):
        """Max reduction; ties route the gradient to the first maximizer."""
        val = self.value.max(axis=axis, keepdims=keepdims)
        out = Tensor(val)

        def vjp(g, a=self, axis=axis, keepdims=keepdims):
            buf = np.zeros_like(a.value)
            if axis is None:
                flat_idx = int(np.argmax(a.value))
                buf.reshape(-1)[flat_idx] = np.sum(g)
            else:
                idx = np.argmax(a.value, axis=axis)
                gg = g if keepdims else np.expand_dims(g, axis)
                np.put_along_axis(
                    buf, np.expand_dims(idx, axis), gg, axis=axis
                )
            a._accum(buf)

        return _with_vjp(out, (self,), vjp)


def _with_vjp(out: Tensor, parents, vjp) -> Tensor:
    """Attach graph metadata to ``out`` and register it on the active tape."""
    tape = _active_tape()
    if tape is None:
        return out
    out._parents = tuple(parents)
    out._vjp = vjp
    tape._nodes.append(out)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


# -- module-level primitives ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    out = Tensor(av @ bv)

    def vjp(g, a=a, b=b):
        av, bv = a.value, b.value
        if av.ndim == 1 and bv.ndim == 1:
            a._accum(g * bv)
            b._accum(g * av)
        elif av.ndim == 1:
            # (n,) @ (..., n, k) -> (..., k)
            ga = (bv @ g[..., :, None])[..., 0]
            a._accum(_unbroadcast(ga, av.shape))
            gb = av[:, None] * g[..., None, :]
            b._accum(_unbroadcast(gb, bv.shape))
        elif bv.ndim == 1:
            # (..., m, n) @ (n,) -> (..., m)
            ga = g[..., :, None] * bv[None, :]
            a._accum(_unbroadcast(ga, av.shape))
            gb = (np.swapaxes(av, -1, -2) @ g[..., :, None])[..., 0]
            b._accum(_unbroadcast(gb, bv.shape))
        else:
            ga = g @ np.swapaxes(bv, -1, -2)
            a._accum(_unbroadcast(ga, av.shape))
            gb = np.swapaxes(av, -1, -2) @ g
            b._accum(_unbroadcast(gb, bv.shape))

    return _with_vjp(out, (a, b), vjp)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(np.maximum(a.value, b.value))

    def vjp(g, a=a, b=b):
        mask = a.value >= b.value
        a._accum(_unbroadcast(g * mask, a.value.shape))
        b._accum(_unbroadcast(g * ~mask, b.value.shape))

    return _with_vjp(out, (a, b), vjp)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(np.minimum(a.value, b.value))

    def vjp(g, a=a, b=b):
        mask = a.value <= b.value
        a._accum(_unbroadcast(g * mask, a.value.shape))
        b._accum(_unbroadcast(g * ~mask, b.value.shape))

    return _with_vjp(out, (a, b), vjp)


def absolute(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.abs(a.value))

    def vjp(g, a=a):
        a._accum(g * np.where(a.value >= 0.0, 1.0, -1.0))

    return _with_vjp(out, (a,), vjp)


def where(mask: np.ndarray, a, b) -> Tensor:
    """Elementwise select with a constant boolean mask."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    out = Tensor(np.where(mask, a.value, b.value))

    def vjp(g, a=a, b=b, mask=mask):
        a._accum(_unbroadcast(g * mask, a.value.shape))
        b._accum(_unbroadcast(g * ~mask, b.value.shape))

    return _with_vjp(out, (a, b), vjp)


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.value))

    def vjp(g, a=a, y=out.value):
        a._accum(g * y)

    return _with_vjp(out, (a,), vjp)


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.value))

    def vjp(g, a=a):
        a._accum(g / a.value)

    return _with_vjp(out, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    out = Tensor(y)

    def vjp(g, a=a, y=y):
        a._accum(g * (1.0 - y * y))

    return _with_vjp(out, (a,), vjp)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign so exp() never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = _stable_sigmoid(np.asarray(a.value, dtype=np.float64))
    out = Tensor(y)

    def vjp(g, a=a, y=y):
        a._accum(g * y * (1.0 - y))

    return _with_vjp(out, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.value, 0.0))

    def vjp(g, a=a):
        a._accum(g * (a.value >= 0.0))

    return _with_vjp(out, (a,), vjp)


def concatenate(parts: list, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.value for p in parts], axis=axis))
    sizes = [p.value.shape[axis] for p in parts]

    def vjp(g, parts=parts, sizes=sizes, axis=axis):
        offsets = np.cumsum([0] + sizes)
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            p._accum(g[tuple(sl)])

    return _with_vjp(out, tuple(parts), vjp)


def stack(parts: list, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.stack([p.value for p in parts], axis=axis))

    def vjp(g, parts=parts, axis=axis):
        for i, p in enumerate(parts):
            p._accum(np.take(g, i, axis=axis))

    return _with_vjp(out, tuple(parts), vjp)


def inverse(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.value.ndim != 2 or a.value.shape[0] != a.value.shape[1]:
        raise DimensionError(f"inverse needs a square matrix, got {a.value.shape}")
    y = np.linalg.inv(a.value)
    out = Tensor(y)

    def vjp(g, a=a, y=y):
        a._accum(-y.T @ g @ y.T)

    return _with_vjp(out, (a,), vjp)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.value
    xmax = x.max(axis=axis, keepdims=True)
    shifted = x - xmax
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y)

    def vjp(g, a=a, y=y, axis=axis):
        soft = np.exp(y)
        a._accum(g - soft * g.sum(axis=axis, keepdims=True))

    return _with_vjp(out, (a,), vjp)
