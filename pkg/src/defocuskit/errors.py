"""Exception types shared across the package.

The CLI maps InputError to exit code 2 and NumericError to exit code 1.
"""


class InputError(ValueError):
    """Bad user input: unreadable file, wrong shape, invalid parameter."""


class NumericError(RuntimeError):
    """Numeric failure: solver did not converge, NaN during training."""
