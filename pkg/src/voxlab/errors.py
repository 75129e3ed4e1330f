"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1, FormatError -> 2,
InternalError -> 3.
"""


class VoxlabError(Exception):
    """Base class for all package-level errors."""


class ValidationError(VoxlabError):
    """Input data violates a documented invariant (bad manifest, bad pose, ...)."""


class FormatError(VoxlabError):
    """A file on disk is malformed, truncated, or of an unsupported version."""


class InternalError(VoxlabError):
    """An internal invariant was violated; indicates a bug, not bad input."""
