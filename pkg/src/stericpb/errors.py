"""Exception hierarchy shared by all solver modules."""


class StericPBError(Exception):
    """Base class for solver errors."""

    exit_code = 1


class InvalidArgument(StericPBError, ValueError):
    exit_code = 2


class ConfigError(StericPBError):
    exit_code = 2


class UnsupportedConfiguration(ConfigError):
    pass


class PQRParseError(StericPBError):
    exit_code = 4

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class NumericalFailure(StericPBError):
    """Raised when an iteration exhausts its budget or stagnates."""

    exit_code = 3

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
