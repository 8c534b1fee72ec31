"""Exception and warning types raised across the package."""


class RemovalSynthError(Exception):
    """Base class for every domain error raised by this package."""


class UnreadableFile(RemovalSynthError, OSError):
    pass


class SchemaViolation(RemovalSynthError, ValueError):
    pass


class LengthMismatch(RemovalSynthError, ValueError):
    pass


class EmptyMask(RemovalSynthError, ValueError):
    pass


class EmptyClass(RemovalSynthError, ValueError):
    pass


class DegenerateResize(RemovalSynthError, ValueError):
    pass


class BothEmpty(RemovalSynthError, ValueError):
    pass


class InstanceTooLarge(RemovalSynthError, ValueError):
    pass


class EmptyFeasibleRegion(RemovalSynthError):
    """No paste center satisfies both the IoU and the margin constraint.

    Callers are expected to resample the scale (or the background) and retry.
    """


class FrameMismatch(RemovalSynthError, ValueError):
    pass


class DimMismatch(RemovalSynthError, ValueError):
    pass


class EmptyRegion(RemovalSynthError, ValueError):
    pass


class TooSmall(RemovalSynthError, ValueError):
    pass


class PairingError(RemovalSynthError, ValueError):
    pass


class ExhaustedCorpus(RemovalSynthError):
    """No background admitted any instance within the retry budget."""


class DegeneratePolygon(UserWarning):
    """Polygon with fewer than three vertices; decoded as an empty mask."""


class InvariantViolation(RemovalSynthError, AssertionError):
    """A generated triplet broke a compositing invariant (a bug, not bad data)."""
