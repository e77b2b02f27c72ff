"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid geometry, discretization or run configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(RuntimeError):
    """NaN/inf encountered or a solve failed to meet its tolerance."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch


class SingularSystemError(NumericalError):
    """Sparse factorization failed."""


class UsageError(RuntimeError):
    """API called out of order (e.g. backward without a cached forward)."""
