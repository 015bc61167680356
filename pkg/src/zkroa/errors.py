"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI uses when it aborts on it.
"""


class ZKError(Exception):
    exit_code = 1


class ConfigError(ZKError, ValueError):
    exit_code = 2


class NumericalError(ZKError, ArithmeticError):
    exit_code = 3


class IntegrationBlowup(NumericalError):
    """A non-finite state or integral appeared during integration."""

    def __init__(self, message, index=None, sample=None):
        super().__init__(message)
        self.index = index
        self.sample = sample


class DegenerateDataError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class SeedBelowThresholdError(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class MissingArtifactError(ZKError, FileNotFoundError):
    exit_code = 4
