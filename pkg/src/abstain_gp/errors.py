"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AbstainGPError(Exception):
    exit_code = 1


class ConfigError(AbstainGPError):
    exit_code = 2


class DataError(AbstainGPError):
    exit_code = 3


class NumericalError(AbstainGPError):
    """Cholesky failure, non-convergence, or an unusable fit."""

    exit_code = 4


class NotConvergedError(NumericalError):
    pass


class RuleSyntaxError(ConfigError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
