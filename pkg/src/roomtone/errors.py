"""Exception types shared across the toolkit."""


class RoomtoneError(Exception):
    """Base class for all toolkit errors."""


class InputTooShort(RoomtoneError):
    """Signal shorter than the operation requires."""


class RateMismatch(RoomtoneError):
    """Sample rates of the operands disagree (resampling is never implicit)."""


class ShapeMismatch(RoomtoneError):
    """Array shapes or channel layouts are incompatible."""


class LengthMismatch(RoomtoneError):
    """Signals must have equal length; no implicit trimming."""


class ZeroSignal(RoomtoneError):
    """Operation undefined on a signal with (near-)zero energy."""


class DegenerateGeometry(RoomtoneError):
    """Room geometry admits no impulse response (e.g. source == receiver)."""


class InfiniteReverb(RoomtoneError):
    """No absorption anywhere; reverberation time diverges."""


class InfeasibleTarget(RoomtoneError):
    """Random sampling could not satisfy the requested constraint."""


class InsufficientDecay(RoomtoneError):
    """Energy decay curve does not span the fit range."""


class NoDecayRegions(RoomtoneError):
    """No free-decay segments found in the signal (silence, tones, ...)."""


class ParamOutOfRange(RoomtoneError):
    """Acoustic parameter outside the supported range."""


class EmptyPool(RoomtoneError):
    """Impulse-response pool has no entry for the requested split."""


class BadVariant(RoomtoneError):
    """Unknown alteration variant name."""


class BadDim(RoomtoneError):
    """Feature dimension unsupported (e.g. odd size for sinusoidal encoding)."""


class LengthNotAligned(RoomtoneError):
    """Input length is not a multiple of the encoder's downsampling factor."""


class EmptyAfterFilter(RoomtoneError):
    """Corpus filtering removed every entry."""
