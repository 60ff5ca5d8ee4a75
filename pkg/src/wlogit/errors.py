"""Exception types shared across the package."""


class WLogitError(Exception):
    """Base class for every error raised by this package."""


class DataError(WLogitError):
    """Invalid input: bad shapes, non-binary labels, parse failures,
    degenerate samples."""


class NumericError(WLogitError):
    """Numerical failure: factorization breakdown or a singular system."""


class UsageError(WLogitError):
    """Command-line usage error."""
