"""Exception types shared across the toolkit."""


class NetReportError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(NetReportError, ValueError):
    """Invalid parameters or malformed input."""


class DegenerateDenominatorError(NetReportError, ZeroDivisionError):
    """An estimator denominator evaluated to zero."""


class DataError(NetReportError):
    """A data file failed validation.

    ``row`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
