"""Exception hierarchy shared by every stage of the pipeline."""


class ShillkitError(Exception):
    """Base class for errors raised by shillkit."""


class ValidationError(ShillkitError, ValueError):
    """A configuration or argument violates its contract."""


class DatasetParseError(ShillkitError, ValueError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class UnknownIdError(ShillkitError, LookupError):
    """A user or item id is not present in the matrix."""


class ColdStartError(ShillkitError, LookupError):
    """A prediction was requested for a user with no ratings."""


class CapabilityError(ShillkitError):
    """The data lacks something an operation needs, e.g. genre metadata."""
