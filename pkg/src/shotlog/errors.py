"""Exception types shared across the toolkit."""


class FormatError(ValueError):
    """Audio file exists but is not a supported RIFF/WAVE encoding."""


class ValidationError(ValueError):
    """An annotation record violates the schema; carries the line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigurationError(ValueError):
    """Inputs are individually valid but mutually inconsistent (sample
    rates, grids, missing paths)."""


class FitError(ValueError):
    """Model fitting cannot proceed on this data (degenerate input,
    single-class labels)."""
