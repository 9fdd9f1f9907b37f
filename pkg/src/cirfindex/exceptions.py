"""Exception hierarchy for cirfindex."""


class CIRFError(Exception):
    """Base class for all errors raised by this package."""


class NotPrime(CIRFError, ValueError):
    pass


class OrderMismatch(CIRFError, ValueError):
    pass


class DivisibilityViolation(CIRFError, ValueError):
    pass


class WidthOverflow(CIRFError, ValueError):
    """Modulus too large for exact 64-bit accumulation of a transform."""


class LengthMismatch(CIRFError, ValueError):
    pass


class ShapeMismatch(CIRFError, ValueError):
    pass


class ZeroElement(CIRFError, ZeroDivisionError):
    pass


class ZeroFilterEntry(CIRFError, ValueError):
    pass


class WindowTooLarge(CIRFError, ValueError):
    pass


class RankTooLarge(CIRFError, ValueError):
    pass


class DitherExhausted(CIRFError, RuntimeError):
    pass


class ScenarioMismatch(CIRFError, ValueError):
    pass


class EmptyScores(CIRFError, ValueError):
    pass


class FormatVersionMismatch(CIRFError, ValueError):
    pass


class CorruptHeader(CIRFError, ValueError):
    pass


class CorruptRecord(CIRFError, ValueError):
    """A stored record failed its checksum; ``index`` locates it."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CorrelationBoundViolation(CIRFError, ValueError):
    """Modulus does not exceed the largest reachable correlation value."""
