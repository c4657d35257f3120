"""Exception hierarchy shared by every stage of the detector."""


class BeamTagError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateReturn(BeamTagError):
    pass


class BeamOutOfRange(BeamTagError):
    pass


class ScanFormatError(BeamTagError):
    """A scan file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class TargetBehindSensor(BeamTagError):
    pass


class TargetOutOfRange(BeamTagError):
    pass


class LengthMismatch(BeamTagError):
    pass


class BadLength(BeamTagError):
    pass


class Infeasible(BeamTagError):
    pass


class CollisionDetected(BeamTagError):
    pass


class TooManyBadBits(BeamTagError):
    pass


class DegenerateGeometry(BeamTagError):
    pass


class CornerFitFailed(BeamTagError):
    pass


class IllConditioned(BeamTagError):
    pass


class OutOfPlane(BeamTagError):
    pass
