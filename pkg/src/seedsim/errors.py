"""Exception types shared across the simulation, codecs and ground services."""


class SeedSimError(Exception):
    """Base class for all package-specific errors."""


# --- kernel ---------------------------------------------------------------

class PastEvent(SeedSimError):
    """An event was scheduled before the current simulation time."""


# --- middleware -----------------------------------------------------------

class UnknownTopic(SeedSimError):
    pass


class SizeMismatch(SeedSimError):
    pass


# --- transports -----------------------------------------------------------

class BusError(SeedSimError):
    """CAN transmission attempted on an unterminated or detached segment."""


class PayloadTooLarge(SeedSimError):
    pass


# --- power ----------------------------------------------------------------

class NoSource(SeedSimError):
    """All supply inputs are latch-disabled or below the minimum bus voltage."""


class SequenceViolation(SeedSimError):
    """Battery current observed while the shutdown latches were supposed to hold."""


# --- flight / sensors -----------------------------------------------------

class PhaseError(SeedSimError):
    pass


class OutOfModel(SeedSimError):
    """Altitude above the supported atmosphere model ceiling."""


class CorruptRecord(SeedSimError):
    """Flash record failed its checksum in every stored copy."""


# --- codecs ---------------------------------------------------------------

class Truncated(SeedSimError):
    pass


class WrongLength(SeedSimError):
    pass


class BadCrc(SeedSimError):
    pass


class BadSignature(SeedSimError):
    pass


class ReplayDetected(SeedSimError):
    pass


class DuplicateMsgId(SeedSimError):
    pass


class UnknownType(SeedSimError):
    pass


class UnknownVersion(SeedSimError):
    pass


class UnknownMessage(SeedSimError):
    pass


# --- backend --------------------------------------------------------------

class BadMagic(SeedSimError):
    pass


class InsufficientData(SeedSimError):
    pass


class CommandTimeout(SeedSimError):
    pass


# --- recovery -------------------------------------------------------------

class NoSignal(SeedSimError):
    pass


class MaxStepsExceeded(SeedSimError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path or []


# --- analysis -------------------------------------------------------------

class TooShort(SeedSimError):
    pass


class NoRotation(SeedSimError):
    pass


class MissingChannels(SeedSimError):
    pass
