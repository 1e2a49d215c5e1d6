class ShallowNetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ShallowNetError, ValueError):
    pass


class CheckpointFormatError(ShallowNetError):
    """Checkpoint bytes are not a readable SNET file."""


class CheckpointValidationError(ShallowNetError):
    """Checkpoint parses but its parameter table disagrees with its architecture."""


class DataError(ShallowNetError):
    """Dataset layout, image decode or split problems."""
