class HeadcamError(Exception):
    """Base class for all errors raised by headcam.

    Attributes:
        exit_code (int): Process exit code the command line interface reports for this error.
    """

    exit_code = 1


class UsageError(HeadcamError):
    """Raised when a command is invoked with invalid arguments."""

    exit_code = 2


class ConfigError(UsageError):
    """Raised when a configuration value or key is invalid."""


class ParameterError(UsageError):
    """Raised when an operation parameter violates its precondition."""


class DataError(HeadcamError):
    """Raised when input data cannot be used."""

    exit_code = 3


class DataFileNotFoundError(DataError):
    """Raised when a required data file is not found."""


class DecodeError(DataError):
    """Raised when a recording cannot be read."""


class FormatError(DataError):
    """Raised when an image or file has an unexpected layout."""


class EmptyInputError(DataError):
    """Raised when an operation receives no records."""


class SplitError(DataError):
    """Raised when a train/test split cannot be made."""


class ContractError(DataError):
    """Raised when arguments violate a documented contract."""


class ShapeError(ContractError):
    """Raised when array shapes do not line up."""


class FitError(DataError):
    """Raised when a probe cannot be fitted on the given data."""


class NumericalError(HeadcamError):
    """Raised when a computation breaks down numerically."""

    exit_code = 4


class TrainingDivergedError(NumericalError):
    """Raised when the training loss becomes NaN or infinite.

    Attributes:
        path_checkpoint (Path | None): Last checkpoint written before the divergence.
    """

    def __init__(self, message: str, path_checkpoint=None):
        super().__init__(message)
        self.path_checkpoint = path_checkpoint


class ZeroVarianceError(NumericalError):
    """Raised when data has no variance to analyse."""
