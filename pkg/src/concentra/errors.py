"""Exception hierarchy shared by all pipeline stages."""


class ConcentraError(Exception):
    """Base class for every error raised by the package."""


class DataError(ConcentraError):
    """Input data cannot be used (missing files, empty selections, ...)."""


class IngestError(DataError):
    """A source file could not be read or lacks the required header."""


class EmptyDatasetError(DataError):
    pass


class ContractError(ConcentraError, ValueError):
    """A caller violated an operation's precondition."""


class RangeError(ContractError):
    pass


class ParameterError(ContractError):
    pass


class DegenerateFitError(ContractError):
    """Training data holds fewer than two distinct labels."""


class UnsupportedOperationError(ConcentraError):
    pass
