"""Exception types shared across the toolkit."""


class StitchcellError(Exception):
    """Base class for all toolkit errors."""


class FrameMismatch(StitchcellError):
    """Composed poses whose inner frames do not match."""


class DegenerateInput(StitchcellError):
    """Point sets unusable for registration (collinear, count mismatch)."""


class MalformedDemonstration(StitchcellError):
    """Demonstration whose gripper/holder timeline deviates from the
    expected five-primitive sequence."""


class EmptyStream(StitchcellError):
    """Sample stream too short to align."""


class TooFewPoints(StitchcellError):
    """Not enough data points to identify the requested mixture."""


class SingularComponent(StitchcellError):
    """Mixture component collapsed despite regularization."""


class TooFewDemos(StitchcellError):
    """Cross-demonstration statistics need at least two demonstrations."""


class TooFewCorners(StitchcellError):
    """Fewer tracked corners than the tracker needs."""


class DegenerateConfiguration(StitchcellError):
    """Correspondences insufficient for pose estimation (collinear or < 4)."""


class NoCandidateVisible(StitchcellError):
    """Every candidate needle pose projects outside the image."""


class UnknownSlot(StitchcellError):
    """Slot index outside the mandrel design."""


class ThreadBreak(StitchcellError):
    """Simulated thread tension exceeded the break limit before the stop
    threshold; signals a misconfigured tension model."""


class InvalidProfile(StitchcellError):
    """Demonstration-generator profile fails validation."""


class TargetUnobservable(StitchcellError):
    """Servo target could not be observed this tick."""


class EmptyInput(StitchcellError):
    """Metrics requested over an empty record list."""
