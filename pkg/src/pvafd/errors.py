"""Exception types shared across the package."""


class PvafdError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PvafdError):
    """An input file header does not match the documented layout."""


class EmptyInputError(PvafdError):
    """An input file contains no data rows."""


class InsufficientDataError(PvafdError):
    """Not enough usable data to carry out the requested operation."""


class DegenerateFitError(PvafdError):
    """A regression design matrix is rank deficient."""


class DegenerateRocError(PvafdError):
    """ROC is undefined: the window lacks ticketed days or clean days."""


class FaultPlanError(PvafdError):
    """A synthetic fault plan is invalid (overlapping or malformed episodes)."""


class MisuseError(PvafdError):
    """An operation was called with inputs outside its contract."""


class TicketParseError(PvafdError):
    """A ticket row could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ManifestError(PvafdError):
    """A run or portfolio manifest is invalid."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
