"""Typed errors raised across the package.

Every error derives from :class:`RobsureError` so callers (and the CLI) can
catch the whole family at once; the class name doubles as the short error
code printed on the command line.
"""


class RobsureError(Exception):
    """Base class for all package errors."""


class NonFiniteInput(RobsureError, ValueError):
    """A matrix or sample contains NaN or infinite entries."""


class InvalidSample(RobsureError, ValueError):
    """A data matrix violates the shape requirements (n >= 2, p >= 2)."""


class SingularScatter(RobsureError, ValueError):
    """A scatter matrix is not numerically positive definite."""


class IndexOutOfRange(RobsureError, IndexError):
    pass


class DegenerateSample(RobsureError, ValueError):
    """Observations are concentrated on a line."""


class NonConvergence(RobsureError, RuntimeError):
    """A fixed-point iteration exhausted its iteration budget."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class LocationOnDatum(RobsureError, ValueError):
    """A location estimate coincides with an observation."""


class KindMismatch(RobsureError, ValueError):
    """An operation was requested for an unsupported estimator kind."""


class EigenvalueCollision(RobsureError, ValueError):
    """Two eigenvalues are closer than the allowed relative gap."""


class NoisePositivity(RobsureError, ValueError):
    """The smallest eigenvalue (noise estimate) is not positive."""


class CurveTooShort(RobsureError, ValueError):
    pass


class LengthMismatch(RobsureError, ValueError):
    pass


class ParseError(RobsureError, ValueError):
    """Malformed CSV input."""


class NonMonotoneDates(RobsureError, ValueError):
    pass


class MissingValue(RobsureError, ValueError):
    pass


class ConfigError(RobsureError, ValueError):
    """A JSON configuration failed validation."""


class IoError(RobsureError, OSError):
    """A file could not be read or written."""
