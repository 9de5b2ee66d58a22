"""
Exceptions raised by gridflow
"""


class GridflowError(Exception):
    """Base class for every error raised by the package."""


class CaseParseError(GridflowError, ValueError):
    """
    Malformed case file row
    :param message: what went wrong
    :param line: 1-based line number in the case text
    """
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = 'line {0}: {1}'.format(line, message)
        super(CaseParseError, self).__init__(message)


class CaseValidationError(GridflowError, ValueError):
    pass


class SingularBranchError(CaseValidationError):
    pass


class SolverError(GridflowError):
    pass


class DimensionError(GridflowError, ValueError):
    pass


class ContractError(GridflowError, ValueError):
    pass


class DatasetError(GridflowError):
    pass


class TrainingError(GridflowError):
    pass


class ConfigError(GridflowError, ValueError):
    """
    Invalid configuration value
    :param field: dotted name of the offending field
    :param message: what is wrong with it
    """
    def __init__(self, field, message):
        self.field = field
        super(ConfigError, self).__init__('{0}: {1}'.format(field, message))
