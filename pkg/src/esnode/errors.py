"""Exception types shared across the package."""


class EsnodeError(Exception):
    """Base class for all package-specific failures."""


class NonFinite(EsnodeError):
    """A computed quantity became NaN or infinite."""


class DimensionMismatch(EsnodeError):
    """Array shapes are inconsistent with the operation's contract."""


class LengthMismatch(EsnodeError):
    """Sequences that must align have different lengths."""


class DegenerateMatrix(EsnodeError):
    """A matrix required to be nonzero (for norm scaling) is zero."""


class SingularSystem(EsnodeError):
    """A linear solve failed because the system matrix is singular."""


class TrialDiverged(EsnodeError):
    """The trial integration blew up before training could start."""
