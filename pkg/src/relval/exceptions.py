"""Exception hierarchy shared by all relval modules."""


class RelvalError(Exception):
    """Base class for all errors raised by this package."""


class DataError(RelvalError):
    """Invalid input data or options: parse failures, schema violations,
    shape mismatches, out-of-domain arguments."""


class ConstantInputError(RelvalError):
    """A series required to vary has zero variance.

    Correlations with a constant series are undefined; this is reported as
    an error rather than silently returning NaN or 0, because a constant
    score column usually indicates a data problem the user must see.
    """


class ComputationError(RelvalError):
    """A numerical procedure could not produce a usable result
    (non-positive-definite matrix, singular system, degenerate bootstrap)."""
