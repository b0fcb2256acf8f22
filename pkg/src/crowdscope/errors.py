"""Exception hierarchy shared by all modules.

Every error carries a stable ``code`` (used in the CLI's error JSON) and an
``exit_code`` category: 2 for usage/config problems, 3 for bad data.
"""


class CrowdError(Exception):
    code = "CrowdError"
    exit_code = 3

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)

    def to_dict(self) -> dict:
        return {"schema": 1, "error": self.code, "message": str(self)}


class UsageError(CrowdError):
    code = "UsageError"
    exit_code = 2


# geometry
class InsufficientPoints(CrowdError):
    code = "InsufficientPoints"


class DegenerateConfiguration(CrowdError):
    code = "DegenerateConfiguration"


class PointAtInfinity(CrowdError):
    code = "PointAtInfinity"


class NonInvertible(CrowdError):
    code = "NonInvertible"


class LayoutMismatch(CrowdError):
    code = "LayoutMismatch"


# motion
class InvalidPlan(UsageError):
    code = "InvalidPlan"


class DimensionMismatch(CrowdError):
    code = "DimensionMismatch"


class EmptyInput(CrowdError):
    code = "EmptyInput"


class NoFrames(UsageError):
    code = "NoFrames"


# flowsum / congestion
class DegenerateTracklet(CrowdError):
    code = "DegenerateTracklet"


class EmptyCluster(CrowdError):
    code = "EmptyCluster"


class TrackletTooShort(CrowdError):
    code = "TrackletTooShort"


# synth / cli
class InvalidSpec(UsageError):
    code = "InvalidSpec"


class InvalidConfig(UsageError):
    code = "InvalidConfig"


class HomographyRequired(UsageError):
    code = "HomographyRequired"


class FormatError(CrowdError):
    code = "FormatError"
