"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
InternalConsistencyError -> 3.
"""


class ParseDisambError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ParseDisambError, ValueError):
    """Invalid configuration: bad ranges, missing flags, misuse of an API."""


class DataError(ParseDisambError, ValueError):
    """Invalid or missing input data: malformed records, empty results."""


class InternalConsistencyError(ParseDisambError, RuntimeError):
    """A guaranteed numerical property was violated (e.g. likelihood decrease)."""
