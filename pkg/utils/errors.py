"""Exception hierarchy shared by every shiftlab module.

Validation-family errors map to CLI exit code 1, everything else to 2.
"""


class ShiftLabError(Exception):
    """Base class for shiftlab failures"""


class ValidationError(ShiftLabError, ValueError):
    """A precondition or contract on the inputs was violated"""


class DatasetValidationError(ValidationError):
    """Dataset or manifest content is invalid"""


class PartitionError(ValidationError):
    """A partition or split specification cannot be applied"""


class PlanValidationError(ValidationError):
    """An experiment plan or config file is invalid"""


class ConfigurationError(ValidationError):
    """Environment configuration is invalid"""


class EstimatorError(ShiftLabError, ValueError):
    """A divergence estimator cannot be evaluated on the given samples"""


class InsufficientRecordsError(ShiftLabError, ValueError):
    """Too few records or architectures survive for a regression"""


class TrainingError(ShiftLabError, RuntimeError):
    """Training diverged"""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class CalibrationError(ShiftLabError, RuntimeError):
    """The calibration objective became non-finite"""

    def __init__(self, message, parameters=None):
        super().__init__(message)
        self.parameters = parameters


class PermutationError(ShiftLabError, RuntimeError):
    """A permutation statistic failed"""

    def __init__(self, message, permutation=None):
        super().__init__(message)
        self.permutation = permutation


VALIDATION_EXIT_CODE = 1
RUNTIME_EXIT_CODE = 2


def exit_code_for(exc):
    """Map an exception to the CLI exit code"""
    if isinstance(exc, (ValidationError, EstimatorError, InsufficientRecordsError)):
        return VALIDATION_EXIT_CODE
    return RUNTIME_EXIT_CODE
