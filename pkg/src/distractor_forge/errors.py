"""Exception hierarchy shared by every module."""


class ForgeError(Exception):
    """Base class for all toolkit errors."""


class DatasetError(ForgeError, ValueError):
    """A dataset record or file violates the schema or an item invariant."""


class TransportError(ForgeError):
    """An endpoint call failed after the retry budget was spent."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class ProtocolError(ForgeError):
    """An endpoint answered, but not in the expected shape."""


class ParseError(ForgeError, ValueError):
    """A model response could not be parsed into the expected structure."""


class ConfigError(ForgeError, ValueError):
    """The run configuration is incomplete or inconsistent."""
