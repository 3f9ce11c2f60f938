"""Custom exceptions for the lcc_mixtures package."""


class LccMixturesError(Exception):
    """Base class for all exceptions in the lcc_mixtures package.

    Attributes:
        exit_code -- process exit code used by the command-line front end
    """

    exit_code = 1


class InputDataError(LccMixturesError):
    """Raised when input data cannot be used as given."""

    exit_code = 2


class NumericFailureError(LccMixturesError):
    """Raised when a numerical routine cannot produce a valid result."""

    exit_code = 3


class ConfigurationError(LccMixturesError, ValueError):
    """Raised for invalid models, bounds, settings or option values."""

    exit_code = 4


class EmptyFileError(InputDataError):
    """Raised when a CSV file contains no data rows.

    Attributes:
        path -- path of the empty file
    """

    code = "empty-file"

    def __init__(self, path):
        self.path = path
        super().__init__(f"No data rows found in {path}")


class UndecodableFileError(InputDataError):
    """Raised when a text file is not valid UTF-8.

    Attributes:
        path -- path of the file
        offset -- 0-based byte offset of the first undecodable byte
    """

    code = "undecodable-file"

    def __init__(self, path, offset):
        self.path = path
        self.offset = offset
        super().__init__(f"{path} is not valid UTF-8 (byte offset {offset})")


class RaggedRowError(InputDataError):
    """Raised when a CSV row has a different number of fields than the first row.

    Attributes:
        line -- 1-based line number of the offending row
        expected -- number of fields expected
        found -- number of fields found
    """

    code = "ragged-row"

    def __init__(self, line, expected, found):
        self.line = line
        self.expected = expected
        self.found = found
        super().__init__(f"Line {line}: expected {expected} fields, found {found}")


class NonNumericCellError(InputDataError):
    """Raised when a CSV cell cannot be parsed as a real number.

    Attributes:
        line -- 1-based line number of the offending row
        column -- name (or 1-based index) of the offending column
        value -- the raw cell text
    """

    code = "non-numeric"

    def __init__(self, line, column, value):
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"Line {line}, column {column}: non-numeric value {value!r}")


class NonFiniteValueError(InputDataError):
    """Raised when data contains NaN or infinite values.

    Attributes:
        line -- 1-based line number (or row index) of the first offending value
        column -- column of the first offending value
    """

    code = "non-finite"

    def __init__(self, line, column):
        self.line = line
        self.column = column
        super().__init__(f"Line {line}, column {column}: non-finite value")


class DimensionMismatchError(InputDataError):
    """Raised when arrays or models disagree on the data dimension."""


class LabelMismatchError(InputDataError):
    """Raised when a label matrix does not match the data or is not one-hot."""


class InsufficientDataError(InputDataError):
    """Raised when there are fewer observations than mixture components."""


class DegenerateDataError(InputDataError):
    """Raised when all observations are identical, so no scatter can be estimated."""


class ArtifactFormatError(InputDataError):
    """Raised when a model artifact cannot be read back."""


class FactorizationError(NumericFailureError):
    """Raised when a covariance matrix cannot be Cholesky-factored."""


class BoundaryError(NumericFailureError):
    """Raised when a gradient is requested for parameters on the bounds of the parameter space."""


class QuadratureResolutionError(NumericFailureError):
    """Raised when refining a quadrature rule changes the result by more than the tolerance.

    Attributes:
        coarse -- value under the given rule
        fine -- value under the refined rule
    """

    def __init__(self, coarse, fine, tolerance):
        self.coarse = coarse
        self.fine = fine
        super().__init__(
            f"Quadrature rule too coarse: refinement moved {coarse!r} to {fine!r} "
            f"(tolerance {tolerance})"
        )


class ScenarioFailedError(NumericFailureError):
    """Raised when too many simulation replicates fail.

    Attributes:
        failed -- number of failed replicates
        total -- number of attempted replicates
    """

    def __init__(self, failed, total):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed} of {total} replicates failed")


class InvalidParametersError(ConfigurationError):
    """Raised when mixture parameters violate their invariants."""


class UnknownCriterionError(ConfigurationError):
    """Raised when a criterion name cannot be resolved."""


class UnsupportedModelError(ConfigurationError):
    """Raised when an operation is requested for a model it does not support."""


class CriterionInputError(ConfigurationError):
    """Raised when fitted results cannot be combined into a criterion table."""
