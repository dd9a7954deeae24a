"""Exception hierarchy shared by every subpackage."""


class DiffuseToFError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(DiffuseToFError, ValueError):
    """A parameter value lies outside its valid domain."""


class ConfigurationError(DiffuseToFError, ValueError):
    """Inputs are inconsistent with each other (shapes, counts, fields)."""


class DivergenceError(DiffuseToFError, FloatingPointError):
    """An iterative solver produced a non-finite objective.

    The loss trace recorded up to the failure is attached as ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)
