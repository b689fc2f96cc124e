"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
data/format/geometry problems exit 3, numeric failures exit 4.
"""


class BrepaeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BrepaeError):
    """Bad user-supplied configuration (unknown key, invalid value)."""


class InvalidGeometryError(BrepaeError):
    """Geometry evaluated to something unusable (degenerate, non-finite)."""


class DataFormatError(BrepaeError):
    """A serialized artifact is malformed or has the wrong version."""


class ContractError(BrepaeError):
    """An in-process API was called with inputs violating its contract."""


class NumericError(BrepaeError):
    """A numeric computation produced NaN/Inf where it must not."""
