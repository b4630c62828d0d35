"""Exception taxonomy shared by all modules.

The CLI maps these onto distinct exit codes, so the split matters there;
everywhere else they behave like ordinary ValueError/RuntimeError.
"""


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class DomainError(ValueError):
    """Input is outside the mathematical domain of the operation."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class ContractError(RuntimeError):
    """An API was called out of order (e.g. backward without forward)."""


class NumericalError(ArithmeticError):
    """NaN/Inf surfaced where only finite values are allowed."""


class ParseError(ValueError):
    """A data file could not be parsed; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(RuntimeError):
    """A checkpoint could not be read back."""
