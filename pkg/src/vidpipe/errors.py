"""Exception types shared across the package."""


class VidpipeError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(VidpipeError):
    """Array or frame dimensions violate an operation's contract."""


class FormatError(VidpipeError):
    """A binary file is malformed. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class IntegrityError(VidpipeError):
    """Stored data disagrees with its own manifest or index."""


class ConfigurationError(VidpipeError):
    """A name, flag, or config value is out of range or cannot be resolved."""


class NotFoundError(VidpipeError):
    """A named resource (pipeline, model, checkpoint) does not exist."""


class ConsistencyError(VidpipeError):
    """Two inputs that must agree (window vs. record, prediction granularities) do not."""
