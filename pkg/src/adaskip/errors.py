"""Exception types shared across the package.

The CLI maps ValidationError (and subclasses) to exit code 2 and any other
AdaskipError to exit code 3.
"""


class AdaskipError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(AdaskipError):
    """Bad input: malformed config, inconsistent shapes, out-of-range values."""


class EmptyParetoError(ValidationError):
    """No operating point survives the accuracy floor; the runtime cannot start."""


class TrainingDiverged(AdaskipError):
    """A non-finite loss or gradient was produced during training."""
