"""Exception hierarchy shared by every module of the package."""


class BuresError(Exception):
    """Base class for all errors raised by this package."""


class NonConvergence(BuresError, ArithmeticError):
    pass


class NotPsd(BuresError, ValueError):
    pass


class SingularMatrix(BuresError, ValueError):
    pass


class DimensionMismatch(BuresError, ValueError):
    pass


class ExpNotAdmissible(BuresError, ValueError):
    """Raised when ``I + V`` is not positive semidefinite."""


class InvalidSchedule(BuresError, ValueError):
    pass


class ScheduleExhausted(BuresError, IndexError):
    pass


class NotRegular(BuresError, ValueError):
    """A measure (or an atom of a distribution) lies outside ``S_zeta``."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateFit(BuresError, ValueError):
    pass


class DatasetError(BuresError, ValueError):
    """A dataset or config file failed validation."""


class NotSymmetric(BuresError, ValueError):
    pass
