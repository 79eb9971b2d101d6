"""Exception hierarchy shared across the toolkit."""


class KinemaError(Exception):
    """Base class for all toolkit errors."""


# --- robot model / parsing ---

class MalformedXml(KinemaError):
    pass


class KinematicCycle(KinemaError):
    pass


class UnknownJointType(KinemaError):
    pass


class MissingLink(KinemaError):
    pass


class UnsupportedFormat(KinemaError):
    pass


class CorruptGeometry(KinemaError):
    pass


# --- kinematics ---

class DofMismatch(KinemaError):
    pass


class UnknownLink(KinemaError):
    pass


class NonpositiveDt(KinemaError):
    pass


# --- projection ---

class BehindCamera(KinemaError):
    pass


class NonpositiveDepth(KinemaError):
    pass


class MissingLinkPose(KinemaError):
    pass


# --- control signal / curation ---

class EmptySequence(KinemaError):
    pass


class LengthMismatch(KinemaError):
    pass


class ShapeMismatch(KinemaError):
    pass


class TooShort(KinemaError):
    pass


class IoFailure(KinemaError):
    pass


# --- metrics ---

class EmptyCloud(KinemaError):
    pass


class TooFewFrames(KinemaError):
    pass


class EmptyFrame(KinemaError):
    pass


class FrameTooSmall(KinemaError):
    pass


class EmptyInput(KinemaError):
    pass
