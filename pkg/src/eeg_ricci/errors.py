"""Exception hierarchy shared by all pipeline stages."""


class PipelineError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class DataError(PipelineError, ValueError):
    exit_code = 3


class ConfigError(PipelineError, ValueError):
    exit_code = 2


class NumericalError(PipelineError, ArithmeticError):
    exit_code = 4


class FieldCountError(DataError):
    def __init__(self, line_no, n_fields):
        super().__init__(f"line {line_no}: expected >= 7 tab-separated fields, got {n_fields}")
        self.line_no = line_no


class NumericParseError(DataError):
    def __init__(self, line_no, detail):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class SampleCountMismatch(UserWarning):
    """Declared sample count disagrees with the number of parsed samples."""


class ZeroSignalError(DataError):
    pass


class OddLengthError(DataError):
    pass


class ZeroVarianceError(NumericalError, ValueError):
    pass


class AsymmetryError(DataError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class IsolatedNodeError(DataError):
    pass


class InfeasibleError(NumericalError, ValueError):
    pass


class DegenerateEdgeError(NumericalError, ValueError):
    pass


class OrderMismatchError(DataError):
    pass


class ShapeError(DataError):
    pass


class DivergenceError(NumericalError):
    pass


class SingleClassError(DataError):
    pass


class BandRangeError(ConfigError):
    pass
