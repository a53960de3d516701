class SquashError(Exception):
    """Base class for every error raised by the bound computations."""


class ArgumentError(SquashError, ValueError):
    pass


class ContractViolation(ArgumentError):
    """Input matrix is not Hermitian / unit-trace / PSD beyond the hard tolerance."""


class ConditioningError(SquashError):
    pass


class ResourceCapError(SquashError):
    def __init__(self, message, size=None):
        super().__init__(message)
        self.size = size


class ConfigError(SquashError):
    pass


class SolverEnvironmentError(SquashError):
    pass


class SolverProtocolError(SquashError):
    def __init__(self, message, output=""):
        super().__init__(message)
        self.output = output


EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_RESOURCE = 4


def exit_code_for(exc):
    if isinstance(exc, ResourceCapError):
        return EXIT_RESOURCE
    if isinstance(exc, (ArgumentError, ConfigError)):
        return EXIT_INPUT
    if isinstance(exc, (ConditioningError, SolverEnvironmentError, SolverProtocolError)):
        return EXIT_SOLVER
    return 1
