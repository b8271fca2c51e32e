"""Exception hierarchy shared across the package."""


class PbrnnError(Exception):
    """Base class for all package errors."""


class SingularDesign(PbrnnError):
    pass


class ShapeMismatch(PbrnnError, ValueError):
    pass


class MissingInput(PbrnnError):
    pass


class ParseError(PbrnnError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class GapError(PbrnnError):
    pass


class InsufficientHistory(PbrnnError):
    pass


class DegenerateColumn(PbrnnError):
    pass


class RangeError(PbrnnError, ValueError):
    pass


class NonFiniteGradient(PbrnnError, FloatingPointError):
    pass


class TrialFailed(PbrnnError):
    pass


class AllTrialsFailed(PbrnnError):
    pass


class DegenerateBaseline(PbrnnError, ZeroDivisionError):
    pass


class DegenerateDifferential(PbrnnError):
    pass
