"""Exception hierarchy shared across the package.

The CLI maps :class:`InputError` to exit code 2 and
:class:`EstimationError` to exit code 3.
"""


class MrbeeError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MrbeeError):
    """Malformed or inadequate user input: files, columns, thresholds, configs."""


class EstimationError(MrbeeError):
    """Numerical or statistical failure while estimating."""
