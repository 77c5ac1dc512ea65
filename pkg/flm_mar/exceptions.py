"""Exception hierarchy. Each class carries the exit code used by ``manage.py flm``."""


class FlmError(Exception):
    exit_code = 1


class ParseError(FlmError):
    exit_code = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}: "
        if line is not None:
            location += f"row {line}: "
        super().__init__(location + message)


class ConfigError(FlmError, ValueError):
    exit_code = 3


class GridError(ConfigError):
    pass


class DimensionError(ConfigError):
    pass


class InvalidSampleError(ConfigError):
    pass


class NumericalError(FlmError, ArithmeticError):
    exit_code = 4


class DecompositionError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class DegenerateSampleError(NumericalError):
    pass


class BootstrapError(NumericalError):
    pass
