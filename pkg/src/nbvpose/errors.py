"""Exception types raised across the package."""


class NbvPoseError(Exception):
    """Base class for all errors raised by nbvpose."""


class NonPositiveDepth(NbvPoseError):
    """A joint lies on or behind the camera plane."""


class DegenerateLookAt(NbvPoseError):
    pass


class DegenerateDetection(NbvPoseError):
    pass


class SubjectNotVisible(NbvPoseError):
    pass


class ParseError(NbvPoseError):
    pass


class TopologyError(NbvPoseError):
    pass


class DivergedError(NbvPoseError):
    pass


class InsufficientViews(NbvPoseError):
    pass


class NumericalFailure(NbvPoseError):
    pass


class NoVisibleCandidate(NbvPoseError):
    pass


class DegenerateLog(NbvPoseError):
    pass


class ExperimentError(NbvPoseError):
    """A closed-loop run aborted; ``frame`` is the offending frame index."""

    def __init__(self, frame, cause):
        super().__init__(f"frame {frame}: {type(cause).__name__}: {cause}")
        self.frame = frame
        self.cause = cause
