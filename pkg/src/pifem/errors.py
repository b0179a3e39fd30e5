"""Exception hierarchy shared across the package."""


class PifemError(Exception):
    """Base class for all package errors."""


class CurveTouchesBoundary(PifemError):
    pass


class DegenerateMesh(PifemError):
    pass


class PointOutsideDomain(PifemError):
    pass


class IndexOutOfRange(PifemError):
    pass


class DimensionMismatch(PifemError):
    pass


class NotSymmetric(PifemError):
    pass


class NotConverged(PifemError):
    """Raised by the iterative solver; carries the best iterate and its report."""

    def __init__(self, message, x=None, report=None, step=None):
        super().__init__(message)
        self.x = x
        self.report = report
        self.step = step


class MissingGradient(PifemError):
    pass


class AtomOutsideInterval(PifemError):
    pass


class BadInterval(PifemError):
    pass


class GridMismatch(PifemError):
    pass


class ConfigError(PifemError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
