from typing import Optional


class OamBenchError(Exception):
    """Base class for every error raised by the simulator."""


class SpaceMismatchError(OamBenchError):
    """Operands live on different mode spaces."""


class RoutingError(OamBenchError):
    """A port map or circuit wiring cannot be realized."""


class DomainError(OamBenchError):
    """A numeric argument is outside the domain of the operation."""


class ConfigError(OamBenchError):
    """A scenario file or override failed validation."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.message = message
        self.line = line
        self.key = key
        location = ""
        if line is not None:
            location = f"line {line}: "
        if key:
            location += f"{key}: "
        super().__init__(f"{location}{message}")
