"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """A caller violated an operation's precondition."""


class ParameterError(ValueError):
    """A scalar parameter is out of its valid range."""


class ScopeError(ValueError):
    """Input is larger than the exact oracle is allowed to handle."""


class ResolutionError(ValueError):
    """A policy grid is too coarse to contain an approximate equilibrium."""


class ConfigError(ValueError):
    """Malformed run configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonFiniteError(RuntimeError):
    """A training loss or parameter became NaN or infinite."""
