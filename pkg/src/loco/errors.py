"""Exception types shared across the package."""


class LocoError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LocoError, ValueError):
    pass


class SizeError(InvalidInputError):
    """Input too large for an exponential-time reference routine."""


class InvalidStateError(LocoError, RuntimeError):
    pass


class FormatError(LocoError, ValueError):
    """Malformed binary file. ``offset`` is the byte position at fault."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class GenerationError(LocoError, RuntimeError):
    """Random generation could not satisfy its constraints within the retry budget."""


class TrainingDiverged(LocoError, FloatingPointError):
    """Non-finite values appeared during optimization."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = dict(payload or {})
