"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`DataError` -> 3, :class:`NumericalError` -> 4.
"""


class MarkovNetError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MarkovNetError, ValueError):
    """Invalid configuration value, unknown key or unknown model name."""


class DataError(MarkovNetError, ValueError):
    """Input data could not be used (schema, parsing, splitting)."""


class SchemaError(DataError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing required column {column!r}")


class CSVParseError(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: column {column!r}: cannot parse {value!r} as a finite number")


class StratificationError(DataError):
    pass


class InfeasibleRatioError(DataError):
    pass


class ModelFormatError(DataError):
    """Malformed model or sidecar document; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class StructureError(MarkovNetError, ValueError):
    pass


class InvalidAssignmentError(MarkovNetError, ValueError):
    pass


class InvalidEvidenceError(MarkovNetError, ValueError):
    pass


class DegenerateClassError(MarkovNetError, ValueError):
    pass


class UndefinedMetricError(MarkovNetError, ValueError):
    pass


class NumericalError(MarkovNetError, ArithmeticError):
    pass


class StateSpaceTooLargeError(NumericalError):
    def __init__(self, size, limit):
        self.size = size
        self.limit = limit
        super().__init__(
            f"joint state space has {size} states, exact limit is {limit}; "
            "use approximate inference or pseudo-likelihood"
        )


class DivergedError(NumericalError):
    def __init__(self, iteration, message="non-finite objective"):
        self.iteration = iteration
        super().__init__(f"{message} at iteration {iteration}")
