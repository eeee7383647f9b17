"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``DataError`` subclasses exit 3 and
``NumericalError`` subclasses exit 4.
"""


class BagbwError(Exception):
    """Base class for all package errors."""


class DataError(BagbwError, ValueError):
    """Malformed or unusable input data."""


class NumericalError(BagbwError, ArithmeticError):
    """A computation could not produce a finite, meaningful answer."""


class InvalidBandwidthError(DataError):
    pass


class InvalidConfigError(DataError):
    pass


class InvalidDensityError(DataError):
    pass


class DegenerateRangeError(DataError):
    pass


class DegenerateNeighborhoodError(NumericalError):
    """Kernel weights around the evaluation point sum to (numerically) zero."""


class BandwidthTooSmallError(DegenerateNeighborhoodError):
    """Some leave-one-out prediction has no remaining kernel mass."""


class SelectionFailedError(NumericalError):
    pass


class NearSingularDensityError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class DegenerateConstantsError(NumericalError):
    pass


class EstimationFailedError(NumericalError):
    pass


class FitUnderdeterminedError(NumericalError):
    pass
