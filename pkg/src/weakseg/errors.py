"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 2, data/format/config
problems exit 3, anything unexpected exits 4.
"""


class WeaksegError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(WeaksegError, ValueError):
    """Array dimensions are inconsistent with what an operation requires."""


class PaddingError(WeaksegError, ValueError):
    """Requested mirror padding exceeds what the image supports."""


class FormatError(WeaksegError):
    """A file does not conform to its binary format (magic, version, size)."""


class DataError(WeaksegError):
    """Values are structurally valid but semantically unusable (NaN, empty)."""


class ConfigError(WeaksegError):
    """Inputs are mutually inconsistent (grid parameters, manifest fields)."""


class BackendError(WeaksegError):
    """The classifier backend failed to produce scores."""


class DatasetError(WeaksegError):
    """Dataset directory contents do not match the expected layout."""


class UsageError(WeaksegError):
    """Command-line invocation is malformed beyond what argparse catches."""
