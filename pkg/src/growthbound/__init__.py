"""Certified sensitivity bounds (growth bound matrices) for small text classifiers.

A growth bound matrix (GBM) for a map ``F`` over a box domain ``X`` is a
nonnegative matrix ``M`` with ``|dF_i/dx_j| <= M[i, j]`` everywhere on ``X``.
Such a matrix turns any boxed input perturbation into a sound box on the
output change, which is what lets us certify text classifiers against
synonym-substitution attacks: each word's admissible substitutions define a
per-coordinate radius, and chaining per-step GBMs through the sequence
bounds the final logits.

The package provides GBM construction for LSTM cells (interval analysis),
diagonal state-space (S4) cells (exact, from the discretized linear system)
and 1-D convolutional text encoders (weight maxima over valid alignments),
plus training with a GBM-sum penalty, sentence certification, a FastAPI
service and a CLI front end.
"""

import importlib

# Lazy re-exports (PEP 562) keep ``import growthbound`` free of numpy so the
# CLI can pin BLAS thread counts via environment variables first.
_EXPORTS = {
    "ActivationKind": ".activations",
    "derivative_bounds": ".activations",
    "value_bounds": ".activations",
    "DataError": ".errors",
    "DimensionError": ".errors",
    "GrowthBoundError": ".errors",
    "NumericError": ".errors",
    "UsageError": ".errors",
    "BoxInterval": ".intervals",
    "Interval": ".intervals",
    "Matrix": ".intervals",
    "Vector": ".intervals",
    "interval_affine": ".intervals",
    "mat_vec": ".intervals",
}

__all__ = sorted(_EXPORTS)

__version__ = "0.1.0"


def __getattr__(name: str):
    if name in _EXPORTS:
        module = importlib.import_module(_EXPORTS[name], __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
