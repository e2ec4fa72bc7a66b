"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SensorPlaceError(Exception):
    exit_code = 1


class InputError(SensorPlaceError):
    exit_code = 2


class NetworkParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(InputError):
    pass


class NumericalError(SensorPlaceError):
    exit_code = 3


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class SingularInformationError(NumericalError):
    pass


class InfeasibleError(SensorPlaceError):
    exit_code = 4
