"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A configuration or call parameter is outside its valid range."""


class NumericError(FloatingPointError):
    """A non-finite value or singular system was encountered."""


class ConfigError(ValueError):
    """A scenario configuration failed validation.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class DivergenceError(RuntimeError):
    """The closed-loop simulation produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
