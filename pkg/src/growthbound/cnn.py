"""Text CNN (valid 1-D conv + activation + max-pool over time) and its GBM.

The encoder applies, per kernel size ``k``, a bank of ``d`` filters
``W in R^{d x d0 x k}`` to every window of ``k`` consecutive word embeddings,
adds a bias, applies ReLU or tanh, max-pools over window positions and
concatenates the per-kernel results.

Because both permitted activations are 1-Lipschitz and piecewise smooth and
pooling selects one window, the derivative of output ``i`` w.r.t. flat input
coordinate ``j`` is (wherever it exists) a single weight entry times an
activation derivative in ``[0, 1]``.  The growth bound is therefore the
largest weight magnitude that can ever connect ``j`` to ``i``:

    M[i, j] = max over valid kernel offsets l of |W[filter(i), coord(j), l]|

where a kernel offset ``l`` is valid for word ``w`` when some window start
``t in [1, N-k+1]`` aligns tap ``l`` with ``w``.  Interior words see every
tap; the first and last ``k - 1`` words see a truncated range.  The
``index_alpha``/``index_beta`` helpers convert flat 1-based indices into
(block, within-block) pairs for both the output side (kernel, filter) and
the input side (word, embedding coordinate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import ops
from .errors import DimensionError
from .gbm import Gbm
from .intervals import Matrix, Vector

_ACTIVATIONS = ("relu", "tanh")

# Pool-excluded positions get this score; both activations map real inputs
# into [-1, inf), so it can never win the max.
_MASKED_SCORE = -1e30


@dataclass(frozen=True)
class CnnParams:
    """Per-kernel-size weights ``(d, d0, k)`` and biases ``(d,)``.

    Kernel sizes must be distinct, each at least 2, and every bank must agree
    on the filter count ``d`` and embedding size ``d0``.  Only ReLU and tanh
    are permitted: the growth bound relies on activation derivatives staying
    in ``[0, 1]``.
    """

    weights: tuple[Matrix, ...]
    biases: tuple[Vector, ...]
    activation: str = "relu"

    def __post_init__(self) -> None:
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if not weights or len(weights) != len(biases):
            raise DimensionError("need one (weights, bias) pair per kernel size")
        if self.activation not in _ACTIVATIONS:
            raise DimensionError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )
        d, d0 = weights[0].shape[0], weights[0].shape[1]
        sizes = []
        for w, b in zip(weights, biases):
            if w.ndim != 3:
                raise DimensionError(f"kernel weights must be 3-D, got {w.shape}")
            if w.shape[0] != d or w.shape[1] != d0:
                raise DimensionError(
                    f"kernel banks disagree: {w.shape[:2]} vs ({d}, {d0})"
                )
            k = w.shape[2]
            if k < 2:
                raise DimensionError(f"kernel size must be >= 2, got {k}")
            if b.shape != (d,):
                raise DimensionError(f"bias shape {b.shape}, expected ({d},)")
            sizes.append(k)
        if len(set(sizes)) != len(sizes):
            raise DimensionError(f"kernel sizes must be distinct, got {sizes}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def kernel_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[2] for w in self.weights)

    @property
    def d(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d0(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_out(self) -> int:
        return len(self.weights) * self.d

    def as_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for w, b, k in zip(self.weights, self.biases, self.kernel_sizes):
            out[f"w_{k}"] = w
            out[f"b_{k}"] = b
        return out

    @classmethod
    def from_arrays(
        cls, arrays: Mapping[str, np.ndarray], kernel_sizes: Sequence[int], activation: str
    ) -> "CnnParams":
        return cls(
            weights=tuple(ops.value_of(arrays[f"w_{k}"]) for k in kernel_sizes),
            biases=tuple(ops.value_of(arrays[f"b_{k}"]) for k in kernel_sizes),
            activation=activation,
        )


def index_alpha(i: int, a: int, d: int) -> int:
    """Block number (1-based) of index ``i`` counted from base ``a`` in blocks of ``d``."""
    if d < 1:
        raise DimensionError(f"block size must be >= 1, got {d}")
    if i < a:
        raise DimensionError(f"index {i} precedes base {a}")
    return (i - a) // d + 1


def index_beta(i: int, a: int, d: int) -> int:
    """Position within the block (1-based): ``1 + ((i - a) mod d)``."""
    if d < 1:
        raise DimensionError(f"block size must be >= 1, got {d}")
    if i < a:
        raise DimensionError(f"index {i} precedes base {a}")
    return 1 + (i - a) % d


def _apply_activation(activation: str, x):
    if activation == "relu":
        return ops.relu(x)
    return ops.tanh(x)


def cnn_forward_arrays(
    arrays: Mapping[str, np.ndarray],
    kernel_sizes: Sequence[int],
    activation: str,
    x,
    window_mask: np.ndarray | None = None,
):
    """Forward pass on ``x`` of shape ``(..., N, d0)``; returns ``(..., |K| * d)``.

    ``window_mask`` (optional, shape ``(..., N)``) marks valid word positions;
    a window is pooled only if every word it covers is valid.  Works on
    ndarrays or Tensors.
    """
    n = ops.value_of(x).shape[-2]
    feats = []
    for k in kernel_sizes:
        t_count = n - k + 1
        if t_count < 1:
            raise DimensionError(f"sequence of {n} words is shorter than kernel {k}")
        w, b = arrays[f"w_{k}"], arrays[f"b_{k}"]
        scores = None
        for l in range(k):
            part = ops.matmul(x[..., l : l + t_count, :], _t2(w, l))
            scores = part if scores is None else scores + part
        scores = scores + b
        act = _apply_activation(activation, scores)
        if window_mask is not None:
            valid = window_mask[..., :t_count].copy()
            for l in range(1, k):
                valid &= window_mask[..., l : l + t_count]
            act = ops.where(valid[..., None], act, _MASKED_SCORE)
        feats.append(ops.max_(act, axis=-2))
    return ops.concatenate(feats, axis=-1)


def _t2(w, l):
    """Tap ``l`` of a kernel bank, transposed to ``(d0, d)`` for right-matmul."""
    sl = w[:, :, l]
    return sl.T if ops.is_tensor(sl) else np.asarray(sl).T


def cnn_forward(p: CnnParams, v_x) -> Vector:
    """Encode a single sequence; ``v_x`` is ``(N, d0)`` or a sequence of vectors."""
    x = np.asarray(v_x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.d0:
        raise DimensionError(f"expected (N, {p.d0}) input, got {x.shape}")
    return cnn_forward_arrays(p.as_arrays(), p.kernel_sizes, p.activation, x)


def _valid_offsets(word: int, k: int, n_words: int) -> tuple[int, int]:
    """Inclusive 0-based kernel offset range through which ``word`` is reachable."""
    return max(0, word - (n_words - k)), min(k - 1, word)


def gbm_cnn(p: CnnParams, n_words: int) -> Gbm:
    """Growth bound matrix of the encoder over ``n_words`` input positions.

    Shape ``(|K| * d, n_words * d0)``; entry ``(i, j)`` is the largest weight
    magnitude connecting input coordinate ``j`` to output ``i`` across valid
    window alignments.  The bound is global (no domain box needed): the
    encoder is piecewise affine in its input with these exact slopes.
    """
    if n_words < max(p.kernel_sizes):
        raise DimensionError(
            f"n_words={n_words} is shorter than the largest kernel {max(p.kernel_sizes)}"
        )
    d, d0 = p.d, p.d0
    matrix = np.zeros((p.n_out, n_words * d0))
    for block, (w, k) in enumerate(zip(p.weights, p.kernel_sizes)):
        wabs = np.abs(w)
        rows = slice(block * d, (block + 1) * d)
        for word in range(n_words):
            lmin, lmax = _valid_offsets(word, k, n_words)
            entry = wabs[:, :, lmin : lmax + 1].max(axis=2)
            matrix[rows, word * d0 : (word + 1) * d0] = np.maximum(
                matrix[rows, word * d0 : (word + 1) * d0], entry
            )
    blocks = tuple((f"w{t + 1}", t * d0, (t + 1) * d0) for t in range(n_words))
    return Gbm(matrix, blocks)


def gbm_cnn_penalty(arrays: Mapping[str, np.ndarray], kernel_sizes: Sequence[int], n_words: int):
    """Sum of GBM entries, differentiable w.r.t. Tensor-valued weights.

    Interior words all share the full-range tap maximum, so it is added once
    with a multiplier instead of once per word.
    """
    total = None
    for k in kernel_sizes:
        wabs = ops.absolute(arrays[f"w_{k}"])
        full = ops.sum_(ops.max_(wabs, axis=2))
        interior = max(0, n_words - 2 * (k - 1))
        part = full * float(interior)
        for word in range(n_words):
            lmin, lmax = _valid_offsets(word, k, n_words)
            if lmin == 0 and lmax == k - 1:
                continue
            part = part + ops.sum_(ops.max_(wabs[:, :, lmin : lmax + 1], axis=2))
        total = part if total is None else total + part
    return total
