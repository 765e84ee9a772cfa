"""Exception types shared across the toolkit."""


class DualcamError(Exception):
    """Base class for all toolkit errors."""


class CodecError(DualcamError):
    """PNG file could not be read or written under the supported profile."""


class ContractViolation(DualcamError):
    """An operation was called with arguments outside its contract."""


class InsufficientDataError(DualcamError):
    """Not enough input samples to run an estimator."""


class DegenerateGeometryError(DualcamError):
    """Geometric configuration admits no valid solution."""


class AlignmentError(DualcamError):
    """A capture pair could not be registered."""


class NoStatisticsError(DualcamError):
    """No valid pixels/samples were available to compute a statistic."""


class StageOrderError(DualcamError):
    """Attempted a backward or skipping manifest stage transition."""


class RevisionConflictError(DualcamError):
    """Optimistic-concurrency revision mismatch on annotation save."""
