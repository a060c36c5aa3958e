"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """Input violates an operation's documented domain."""


class NumericalError(RuntimeError):
    """A quadrature, truncation or conditioning check failed."""
