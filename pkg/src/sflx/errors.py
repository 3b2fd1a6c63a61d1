"""Exception hierarchy shared across the package."""


class SflxError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SflxError, ValueError):
    """An argument violates an operation's precondition (dimension
    mismatch, out-of-range index, malformed configuration)."""


class UnsupportedFormatError(SflxError):
    """Image file format or bit depth outside the supported set."""


class ClassifierIOError(SflxError):
    """External classifier process crashed or violated the wire protocol.

    Never downgraded to a label: a run that hits this aborts."""
