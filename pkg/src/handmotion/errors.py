"""Exception hierarchy shared across the pipeline.

DataError covers malformed inputs (bad files, layout mismatches, degenerate
skeletons); NumericalError covers NaN/Inf propagation and failed numerics.
The CLI maps these to exit codes 2 and 3 respectively.
"""


class HandMotionError(Exception):
    """Base class for all handmotion errors."""


class DataError(HandMotionError):
    """Invalid or inconsistent input data."""


class LayoutMismatchError(DataError):
    """A joint map references indices that do not exist in the skeleton."""


class DegenerateSkeletonError(DataError):
    """Palm length below the degeneracy threshold (tracking failure)."""


class TooShortError(DataError):
    """A sequence is too short for the requested operation."""


class SequenceTooLongError(DataError):
    """Sequence exceeds the summarizer's maximum frame count."""


class InvalidRotationError(DataError):
    """Matrix is not a proper rotation (orthonormal, det +1)."""


class DimensionError(DataError):
    """Tensor or vector shapes do not match the operation's contract."""


class NumericalError(HandMotionError):
    """NaN/Inf detected or a numerical procedure failed."""


class StateError(HandMotionError):
    """Operation called in an invalid state (e.g. backward before forward)."""
