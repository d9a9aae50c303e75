"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
InternalError (and anything unexpected) -> 3.
"""


class DemcloudError(Exception):
    pass


class ConfigError(DemcloudError):
    """Invalid or incomplete configuration / usage."""


class DataError(DemcloudError):
    """Malformed input files, dimension mismatches, invariant-violating data."""


class InternalError(DemcloudError):
    """A condition the pipeline promises can never happen did happen."""
