"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class BudgetError(DomainError):
    """A requested computation would exceed a hard size guard."""


class DatasetFormatError(ValueError):
    """A persisted dataset or model file is malformed.

    ``field`` and ``row`` name the offending location when known.
    """

    def __init__(self, message, *, field=None, row=None):
        where = []
        if field is not None:
            where.append(f"field={field}")
        if row is not None:
            where.append(f"row={row}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.row = row


class IntegrityError(RuntimeError):
    """A model and a dataset do not belong together."""
