"""Exception hierarchy shared by the library and the command-line tool."""


class PanLutError(Exception):
    """Base class for all package errors."""


class ShapeError(PanLutError, ValueError):
    """Array or image dimensions are incompatible."""


class DomainError(PanLutError, ValueError):
    """A value lies outside the domain an operation accepts."""


class IngestError(DomainError):
    """Raw raster samples exceed the declared full-scale value."""


class MetricError(PanLutError, ValueError):
    """A quality metric is undefined for the given inputs."""


class NumericError(PanLutError, ArithmeticError):
    """Non-finite values appeared during optimisation."""


class FormatError(PanLutError, OSError):
    """A binary file does not follow the expected layout."""
