class NumericalError(ArithmeticError):
    """A computation produced non-finite or undefined values."""


class ConfigError(ValueError):
    """An experiment config is malformed, incomplete or out of range."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
