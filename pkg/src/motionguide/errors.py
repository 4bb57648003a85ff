"""Exception types shared across the package."""


class MotionGuideError(Exception):
    """Base class for all package errors."""


# -- prompt parsing ----------------------------------------------------------

class EmptyPrompt(MotionGuideError):
    pass


class NoInstanceFound(MotionGuideError):
    pass


# -- remote planner ----------------------------------------------------------

class PlannerTimeout(MotionGuideError):
    pass


class TransportFailure(MotionGuideError):
    pass


class SchemaViolation(MotionGuideError):
    pass


# -- layout reasoning --------------------------------------------------------

class TooManyInstances(MotionGuideError):
    pass


class EmptyWindow(MotionGuideError):
    pass


class WrongCategory(MotionGuideError):
    pass


class InvalidGraph(MotionGuideError):
    pass


# -- feature volumes ---------------------------------------------------------

class BadMagic(MotionGuideError):
    pass


class DimOverflow(MotionGuideError):
    pass


class TruncatedPayload(MotionGuideError):
    pass


# -- guidance engine ---------------------------------------------------------

class DegenerateBox(MotionGuideError):
    pass


class EmptyForeground(MotionGuideError):
    pass


class EmptyTemplate(MotionGuideError):
    pass


class GridMismatch(MotionGuideError):
    pass


# -- attention modulation ----------------------------------------------------

class ShapeMismatch(MotionGuideError):
    pass


class NonFiniteGradient(MotionGuideError):
    pass
