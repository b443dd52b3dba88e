"""Exception hierarchy shared by every module of the package."""


class PoseIntegrityError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PoseIntegrityError, ValueError):
    """An argument lies outside the domain of the operation."""


class BehindCameraError(DomainError):
    """A world point has (near-)nonpositive depth in the camera frame."""


class ConfigurationError(PoseIntegrityError, ValueError):
    """A configuration is internally inconsistent (e.g. too few keypoints)."""


class ScenarioInfeasibleError(PoseIntegrityError):
    """A synthetic scenario places a keypoint behind the camera or off-image."""


class FileFormatError(PoseIntegrityError, ValueError):
    """A prediction or heatmap file is malformed."""
