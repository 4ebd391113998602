"""The growth bound matrix container.

A growth bound matrix for ``F : X -> R^m`` over a box domain ``X`` in
``R^n`` is a nonnegative ``(m, n)`` matrix ``M`` with

    |dF_i/dx_j (x)| <= M[i, j]    for all x in X.

Two consequences carry the whole package (see :mod:`growthbound.certify`):
box perturbation bounds ``F(x) +- M @ r`` for ``|delta| <= r``, and the
Lipschitz pairing ``max-norm(F(x) - F(x')) <= max(M) * one-norm(x - x')``.

``Gbm`` additionally records named column blocks, because recurrent cells
stack several input groups (current input ``v``, previous hidden state
``h``, previous cell state ``c``) side by side and the certification
recursion needs to address each group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError


@dataclass(frozen=True)
class Gbm:
    """A nonnegative entrywise Jacobian bound with named column blocks.

    ``blocks`` maps block names to ``(start, stop)`` column ranges; together
    the ranges must tile ``[0, n_in)`` in order, without gaps or overlaps.
    """

    matrix: np.ndarray
    blocks: tuple[tuple[str, int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        if m.ndim != 2:
            raise DimensionError(f"GBM must be a matrix, got ndim={m.ndim}")
        if not np.all(np.isfinite(m)):
            raise NumericError("GBM entries must be finite")
        if np.any(m < 0):
            raise NumericError("GBM entries must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        blocks = tuple((str(n), int(a), int(b)) for n, a, b in self.blocks)
        if not blocks:
            blocks = (("x", 0, m.shape[1]),)
        cursor = 0
        for name, start, stop in blocks:
            if start != cursor or stop < start:
                raise DimensionError(f"block {name!r} [{start}, {stop}) breaks the tiling")
            cursor = stop
        if cursor != m.shape[1]:
            raise DimensionError(
                f"blocks cover {cursor} columns, matrix has {m.shape[1]}"
            )
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_out(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_in(self) -> int:
        return self.matrix.shape[1]

    def block_names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.blocks)

    def block(self, name: str) -> np.ndarray:
        """The submatrix of columns belonging to ``name``."""
        for bname, start, stop in self.blocks:
            if bname == name:
                return self.matrix[:, start:stop]
        raise DimensionError(f"no block named {name!r}; have {self.block_names()}")

    def total(self) -> float:
        """Sum of all entries (the quantity penalized during training)."""
        return float(self.matrix.sum())

    def max_entry(self) -> float:
        """Largest entry; the max-norm/one-norm Lipschitz constant."""
        return float(self.matrix.max()) if self.matrix.size else 0.0
