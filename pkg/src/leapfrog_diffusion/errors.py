"""Exception types shared across the package; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid configuration value or flag combination."""


class DataError(ValueError):
    """Malformed or incomplete scene data."""


class ParseError(DataError):
    """A trajectory file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class NumericalError(FloatingPointError):
    """A non-finite value appeared during training or sampling."""
