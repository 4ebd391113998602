"""Exception hierarchy for the growthbound package.

Every error raised deliberately by this package derives from
:class:`GrowthBoundError`, so callers can catch one type at a service or CLI
boundary and map it to an exit code / HTTP status.  The three concrete
subclasses partition failures by *who* can fix them:

* :class:`DimensionError` -- caller passed arrays whose shapes do not match
  the documented contract.
* :class:`NumericError`  -- the computation itself went bad (singular or
  ill-conditioned matrix, NaN/Inf in a loss term, invalid interval).
* :class:`DataError`     -- an input file or dataset is malformed.
* :class:`UsageError`    -- a request or command line is malformed (missing
  path, impossible flag combination); raised only at the service boundary.
"""

from __future__ import annotations


class GrowthBoundError(Exception):
    """Base class for all errors raised by growthbound."""


class DimensionError(GrowthBoundError):
    """Array shapes or sizes violate a documented contract."""


class NumericError(GrowthBoundError):
    """A numeric computation failed (conditioning, NaN/Inf, bad interval)."""


class DataError(GrowthBoundError):
    """An input file, dataset or table is malformed."""


class UsageError(GrowthBoundError):
    """The request itself is wrong: missing inputs, bad flag combinations."""
