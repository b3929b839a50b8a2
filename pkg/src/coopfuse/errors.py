class InvalidArgument(ValueError):
    """Raised when an input violates a documented precondition."""


class ConfigError(InvalidArgument):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class GenerationError(RuntimeError):
    pass
