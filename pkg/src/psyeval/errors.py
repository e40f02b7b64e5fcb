"""Exception hierarchy shared by every module."""


class PsyEvalError(Exception):
    """Base class for all library errors."""


# scale definitions and response data
class SchemaError(PsyEvalError, ValueError):
    pass


class UnresolvedReferenceError(PsyEvalError, ValueError):
    """A facet or domain cites an item/facet that does not exist."""


class DuplicateIdError(PsyEvalError, ValueError):
    pass


class RangeError(PsyEvalError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class AlreadyCodedError(PsyEvalError):
    pass


class CodingError(PsyEvalError):
    pass


class EmptyAfterDeletionError(PsyEvalError):
    pass


class MissingItemError(PsyEvalError, KeyError):
    pass


# statistics
class InsufficientDataError(PsyEvalError, ValueError):
    pass


class LengthMismatchError(PsyEvalError, ValueError):
    pass


class DegenerateInputError(PsyEvalError, ValueError):
    pass


class ShapeError(PsyEvalError, ValueError):
    pass


class ZeroVectorError(PsyEvalError, ValueError):
    pass


class RankError(PsyEvalError, ValueError):
    pass


# factor analysis
class SpecError(PsyEvalError, ValueError):
    pass


class PdError(PsyEvalError, ValueError):
    """Covariance matrix is not positive definite."""


class ArgumentError(PsyEvalError, ValueError):
    pass


class NumericalError(PsyEvalError, ArithmeticError):
    pass


# simulation
class ProfileError(PsyEvalError, ValueError):
    pass


class UnparseableResponseError(PsyEvalError, ValueError):
    pass


class ResponderError(PsyEvalError):
    pass


class ConfigError(PsyEvalError, ValueError):
    pass


# ingestion / CLI
class CsvError(PsyEvalError, ValueError):
    pass


class HeaderError(CsvError):
    pass
