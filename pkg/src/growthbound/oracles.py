"""Independent numerical oracles used to validate the analytic bounds.

Nothing in here shares code with the interval/GBM machinery on purpose: the
finite-difference Jacobian, dense grids, corner enumeration and substitution
enumeration are the second route that the analytic route is checked against.

``fd_jacobian`` uses central differences and runs every column twice, at the
full and at the half step.  Where the two estimates disagree beyond
``flag_tol`` the function is locally non-smooth (a ReLU crossing, a pooling
tie, an interval-bound branch switch) and the column is flagged so callers
can discard it instead of comparing garbage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, DimensionError
from .intervals import BoxInterval


@dataclass(frozen=True)
class FdConfig:
    """Finite-difference settings.

    ``step`` is the central-difference step.  ``tie_tol`` is the margin below
    which two competing quantities (pool candidates, a preactivation against
    zero) count as tied; model-aware stability checks use it.  ``flag_tol``
    is the full-step/half-step disagreement beyond which a column of the
    Jacobian is flagged as straddling a kink.
    """

    step: float = 1e-6
    tie_tol: float = 1e-9
    flag_tol: float = 1e-4


@dataclass(frozen=True)
class FdResult:
    """Jacobian estimate plus per-input-coordinate kink flags."""

    jacobian: np.ndarray
    flagged: np.ndarray

    def clean(self) -> np.ndarray:
        """Columns of the Jacobian whose coordinates were not flagged."""
        return self.jacobian[:, ~self.flagged]


def _fd_columns(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fp = np.asarray(f(x + e)).ravel()
        fm = np.asarray(f(x - e)).ravel()
        cols.append((fp - fm) / (2.0 * h))
    return np.stack(cols, axis=1)


def fd_jacobian(
    f: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    cfg: FdConfig = FdConfig(),
) -> FdResult:
    """Central-difference Jacobian of ``f`` at ``x`` with kink detection.

    ``f`` maps a 1-D float array to an array (any shape, real or complex);
    the result rows follow ``f``'s raveled output.  The returned Jacobian is
    the half-step estimate (the more accurate of the two computed).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"fd_jacobian expects a 1-D input, got shape {x.shape}")
    j_full = _fd_columns(f, x, cfg.step)
    j_half = _fd_columns(f, x, 0.5 * cfg.step)
    scale = np.maximum(1.0, np.abs(j_half).max(initial=0.0))
    flagged = np.abs(j_full - j_half).max(axis=0) > cfg.flag_tol * scale
    return FdResult(jacobian=j_half, flagged=flagged)


def fd_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    cfg: FdConfig = FdConfig(),
) -> FdResult:
    """Gradient of a scalar function, same mechanics as :func:`fd_jacobian`."""
    res = fd_jacobian(lambda z: np.asarray([f(z)]), x, cfg)
    return FdResult(jacobian=res.jacobian[0], flagged=res.flagged)


def grid_minmax(
    f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n: int = 100_001
) -> tuple[float, float]:
    """Extrema of a vectorized scalar function on a dense grid over ``[lo, hi]``."""
    xs = np.linspace(lo, hi, n)
    ys = np.asarray(f(xs))
    return float(ys.min()), float(ys.max())


def box_corners(box: BoxInterval, limit: int = 1 << 20) -> Iterator[np.ndarray]:
    """All corners of a box (2^dim of them); refuses to enumerate past ``limit``."""
    if 2 ** box.dim > limit:
        raise DataError(f"refusing to enumerate 2^{box.dim} corners")
    for bits in itertools.product((0, 1), repeat=box.dim):
        yield np.where(np.asarray(bits, dtype=bool), box.hi, box.lo)


def _alternatives(synonyms, word: str) -> list[str]:
    if hasattr(synonyms, "alternatives"):
        return list(synonyms.alternatives(word))
    if isinstance(synonyms, Mapping):
        return list(synonyms.get(word, ()))
    raise DataError(f"unsupported synonym container: {type(synonyms)!r}")


def substitution_count(tokens: Sequence[str], synonyms) -> int:
    """Size of the exhaustive substitution set (original included per position)."""
    n = 1
    for w in tokens:
        n *= 1 + len(_alternatives(synonyms, w))
    return n


def enumerate_substitutions(
    tokens: Sequence[str],
    synonyms,
    cap: int | None = None,
    mode: str = "exhaustive",
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> Iterator[tuple[str, ...]]:
    """Candidate substituted sentences for ``tokens``.

    ``mode="exhaustive"`` yields the full cartesian product of each position's
    candidate set (the original word plus its alternatives); if ``cap`` is
    given and the product exceeds it, a :class:`DataError` is raised rather
    than silently truncating.  ``mode="sample"`` yields ``n_samples``
    sentences with each position drawn uniformly from its candidate set.
    """
    choices = [[w] + _alternatives(synonyms, w) for w in tokens]
    if mode == "exhaustive":
        total = substitution_count(tokens, synonyms)
        if cap is not None and total > cap:
            raise DataError(f"substitution set has {total} elements, cap is {cap}")
        yield from itertools.product(*choices)
    elif mode == "sample":
        if rng is None:
            raise DataError("mode='sample' requires an rng")
        for _ in range(n_samples):
            yield tuple(c[rng.integers(len(c))] for c in choices)
    else:
        raise DataError(f"unknown enumeration mode: {mode!r}")
