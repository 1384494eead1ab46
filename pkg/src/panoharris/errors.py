"""Exception hierarchy.

Every error class carries a distinct process exit code so the command-line
front end can partition failures without inspecting messages.
"""


class PanoError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class UsageError(PanoError, ValueError):
    exit_code = 2


class ImageFileNotFound(PanoError, FileNotFoundError):
    exit_code = 3


class UnsupportedFormat(PanoError):
    exit_code = 4


class CorruptImage(PanoError):
    exit_code = 5


class DimensionMismatch(PanoError, ValueError):
    exit_code = 6


class ImageTooSmall(PanoError, ValueError):
    exit_code = 7


class EmptyResponse(PanoError):
    """The response map has no positive value: the frame has no features."""

    exit_code = 8


class ZeroGradientNeighborhood(PanoError):
    exit_code = 9


class TooCloseToBorder(PanoError):
    exit_code = 10


class ZeroDescriptor(PanoError):
    exit_code = 11


class InsufficientMatches(PanoError):
    exit_code = 12


class NoConsensus(PanoError):
    exit_code = 13


class DegenerateTransform(PanoError, ValueError):
    exit_code = 14


class PipelineFailure(PanoError):
    """A frame pair failed inside ``stitch_sequence``.

    The panorama built from the frames before the failing pair and the
    transform log so far are attached so callers can still save them.
    """

    exit_code = 15

    def __init__(self, pair_index, cause, panorama=None, log=None):
        super().__init__(f"pipeline failed at pair {pair_index}: {cause}")
        self.pair_index = pair_index
        self.cause = cause
        self.panorama = panorama
        self.log = log if log is not None else []


class MasterTooSmall(PanoError, ValueError):
    exit_code = 16


class MotionEnvelopeError(UsageError):
    """Requested synthetic motion exceeds the supported inter-frame envelope."""


class ConfigError(UsageError):
    pass
